/** Least-squares slope/intercept of y against x (plain sequential sums, the
 * same arithmetic the simulation suite uses for its log-log fits). */
export function leastSquares(x: number[], y: number[]): { slope: number; intercept: number } {
  const n = x.length;
  if (n < 2 || y.length !== n) {
    throw new Error(`need >= 2 paired points, got ${n}/${y.length}`);
  }
  let mx = 0;
  let my = 0;
  for (let i = 0; i < n; i++) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  let sxy = 0;
  let sxx = 0;
  for (let i = 0; i < n; i++) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const slope = sxy / sxx;
  return { slope, intercept: my - slope * mx };
}

export function logLogSlope(x: number[], y: number[]) {
  return leastSquares(x.map(Math.log), y.map(Math.log));
}
