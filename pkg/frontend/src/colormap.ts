/** Small perceptually-ordered colormap (viridis control points, RGB). */
const STOPS: Array<[number, number, number]> = [
  [68, 1, 84], [72, 40, 120], [62, 74, 137], [49, 104, 142], [38, 130, 142],
  [31, 158, 137], [53, 183, 121], [109, 205, 89], [180, 222, 44], [253, 231, 37],
];

export function colormap(u: number): string {
  const t = Math.min(1, Math.max(0, u)) * (STOPS.length - 1);
  const k = Math.min(STOPS.length - 2, Math.floor(t));
  const f = t - k;
  const mix = (a: number, b: number) => Math.round(a + (b - a) * f);
  const [r, g, b] = [0, 1, 2].map((c) => mix(STOPS[k][c], STOPS[k + 1][c]));
  return `rgb(${r},${g},${b})`;
}
