import { ParsedCsv, EmptyInputError, column, uniqueSorted } from "./csv.js";
import { leastSquares } from "./fit.js";
import { colormap } from "./colormap.js";
import { Svg, STYLE, fmt, linearScale, logScale, plotArea } from "./svg.js";

export type FigureKind = "profiles" | "heatmap" | "scaling" | "clausius" | "weak";

export interface FigureResult {
  svg: string;
  meta: Record<string, string | number>;
}

export interface FigureOptions {
  title?: string;
}

const isMicroFrames = (c: ParsedCsv) => "config" in c.meta;
const isMacroFrames = (c: ParsedCsv) => "eps" in c.meta;

interface FrameTable {
  times: number[];
  x: number[];           // site/cell centres mapped to [0,1]
  r: number[][];         // [frame][site]
  p: number[][];
}

function framesTable(csv: ParsedCsv): FrameTable {
  const t = column(csv, "t");
  const i = column(csv, "i");
  const r = column(csv, "r");
  const p = column(csv, "p");
  const times = uniqueSorted(t);
  const n = Math.max(...i);
  const index = new Map(times.map((v, k) => [v, k]));
  const rr = times.map(() => new Array<number>(n).fill(0));
  const pp = times.map(() => new Array<number>(n).fill(0));
  for (let row = 0; row < t.length; row++) {
    const k = index.get(t[row])!;
    rr[k][i[row] - 1] = r[row];
    pp[k][i[row] - 1] = p[row];
  }
  const x = Array.from({ length: n }, (_, j) => (j + 1) / n);
  return { times, x, r: rr, p: pp };
}

// ---------------------------------------------------------------------------
// profiles: per-site time/replica mean of the chain profiles, with error
// bars, optionally overlaid with a macro reference solution
// ---------------------------------------------------------------------------

export function renderProfiles(inputs: ParsedCsv[], opts: FigureOptions = {}): FigureResult {
  const micro = inputs.filter(isMicroFrames);
  const macro = inputs.filter(isMacroFrames);
  if (micro.length === 0) {
    throw new EmptyInputError("profiles figure needs at least one chain frames CSV");
  }
  const tables = micro.map(framesTable);
  const n = tables[0].x.length;
  const mean = new Array<number>(n).fill(0);
  const sq = new Array<number>(n).fill(0);
  let count = 0;
  for (const tb of tables) {
    for (const frame of tb.r) {
      for (let j = 0; j < n; j++) {
        mean[j] += frame[j];
        sq[j] += frame[j] * frame[j];
      }
      count++;
    }
  }
  for (let j = 0; j < n; j++) {
    mean[j] /= count;
    sq[j] = Math.sqrt(Math.max(0, sq[j] / count - mean[j] * mean[j]));
  }

  const area = plotArea();
  const lo = Math.min(...mean.map((m, j) => m - 1.5 * sq[j]));
  const hi = Math.max(...mean.map((m, j) => m + 1.5 * sq[j]));
  const xs = linearScale([0, 1], area.x);
  const ys = linearScale([lo, hi], area.y);
  const svg = new Svg(STYLE.width, STYLE.height, { "data-kind": "profiles" });
  svg.axes(xs, ys, "x", "stretch r", opts.title ?? "stretch profile");
  const step = Math.max(1, Math.floor(n / 24));
  for (let j = 0; j < n; j += step) {
    const x = xs(tables[0].x[j]);
    svg.line(x, ys(mean[j] - sq[j]), x, ys(mean[j] + sq[j]), STYLE.series[0], 1);
  }
  svg.polyline(tables[0].x.map((v, j) => [xs(v), ys(mean[j])] as [number, number]),
    STYLE.series[0], 2);
  const legend: Array<[string, string]> = [["chain mean +- sd", STYLE.series[0]]];
  if (macro.length > 0) {
    const tb = framesTable(macro[0]);
    const last = tb.r[tb.r.length - 1];
    const xm = tb.x.map((v, j) => [xs(v), ys(last[j])] as [number, number]);
    svg.polyline(xm, STYLE.series[1], 2, "6,3");
    legend.push(["viscous reference", STYLE.series[1]]);
  }
  svg.legend(legend, area.x[0] + 10, area.y[1] + 18);
  return { svg: svg.render(), meta: { sites: n, samples: count } };
}

// ---------------------------------------------------------------------------
// heatmap: space-time stretch field
// ---------------------------------------------------------------------------

export function renderHeatmap(inputs: ParsedCsv[], opts: FigureOptions = {}): FigureResult {
  const tb = framesTable(inputs[0]);
  const flat = tb.r.flat();
  const lo = Math.min(...flat);
  const hi = Math.max(...flat);
  const span = hi - lo || 1;
  const area = plotArea();
  const xs = linearScale([0, 1], area.x);
  const ys = linearScale([tb.times[0], tb.times[tb.times.length - 1]], area.y);
  const svg = new Svg(STYLE.width, STYLE.height, { "data-kind": "heatmap" });
  const cw = (area.x[1] - area.x[0]) / tb.x.length;
  for (let k = 0; k < tb.times.length; k++) {
    const y0 = ys(tb.times[Math.min(k + 1, tb.times.length - 1)]);
    const y1 = ys(tb.times[k]);
    const ch = Math.abs(y1 - y0) || 2;
    for (let j = 0; j < tb.x.length; j++) {
      svg.rect(area.x[0] + j * cw, Math.min(y0, y1), cw + 0.5, ch + 0.5,
        colormap((tb.r[k][j] - lo) / span));
    }
  }
  svg.axes(xs, ys, "x", "time", opts.title ?? "stretch field r(t, x)");
  svg.text(area.x[1] - 4, area.y[1] + 16,
    `range [${fmt(lo)}, ${fmt(hi)}]`, "end");
  return { svg: svg.render(), meta: { frames: tb.times.length, sites: tb.x.length } };
}

// ---------------------------------------------------------------------------
// scaling: log-log residual vs N with a fitted slope annotation
// ---------------------------------------------------------------------------

export function renderScaling(inputs: ParsedCsv[], opts: FigureOptions = {}): FigureResult {
  const csv = inputs[0];
  const N = column(csv, "N");
  const res = column(csv, "residual");
  const se = column(csv, "SE");
  const fit = leastSquares(N.map(Math.log), res.map(Math.log));
  const area = plotArea();
  const xs = logScale([Math.min(...N) / 1.3, Math.max(...N) * 1.3], area.x);
  const ys = logScale([Math.min(...res) / 1.6, Math.max(...res) * 1.6], area.y);
  const svg = new Svg(STYLE.width, STYLE.height, {
    "data-kind": "scaling",
    "data-slope": String(fit.slope),
  });
  svg.axes(xs, ys, "chain size N", "per-site closure residual",
    opts.title ?? "one-block closure scaling");
  const line = N.map((n) =>
    [xs(n), ys(Math.exp(fit.intercept + fit.slope * Math.log(n)))] as [number, number]);
  svg.polyline(line, STYLE.series[1], 1.5, "5,4");
  N.forEach((n, k) => {
    const x = xs(n);
    svg.line(x, ys(Math.max(res[k] - se[k], ys.domain[0])), x,
      ys(res[k] + se[k]), STYLE.series[0], 1);
    svg.circle(x, ys(res[k]), 3.5, STYLE.series[0]);
  });
  const ciLo = csv.meta.fit_ci_lo !== undefined ? Number(csv.meta.fit_ci_lo) : NaN;
  const ciHi = csv.meta.fit_ci_hi !== undefined ? Number(csv.meta.fit_ci_hi) : NaN;
  const ciText = Number.isFinite(ciLo) && Number.isFinite(ciHi)
    ? ` (95% CI [${fmt(ciLo)}, ${fmt(ciHi)}])` : "";
  svg.text(area.x[0] + 10, area.y[1] + 18, `fitted slope ${fmt(fit.slope)}${ciText}`);
  return { svg: svg.render(), meta: { slope: fit.slope } };
}

// ---------------------------------------------------------------------------
// clausius: work vs free-energy change over time with the slack band
// ---------------------------------------------------------------------------

export function renderClausius(inputs: ParsedCsv[], opts: FigureOptions = {}): FigureResult {
  const csv = inputs[0];
  const t = column(csv, "t");
  const W = column(csv, "mean_W");
  const D = column(csv, "mean_dF");
  const slack = column(csv, "slack");
  const se = column(csv, "SE");
  const area = plotArea();
  const lo = Math.min(0, ...W, ...D, ...slack.map((s, k) => s - se[k]));
  const hi = Math.max(...W, ...D, ...slack.map((s, k) => s + se[k]));
  const xs = linearScale([t[0], t[t.length - 1]], area.x);
  const ys = linearScale([lo, hi], area.y);
  const svg = new Svg(STYLE.width, STYLE.height, { "data-kind": "clausius" });
  svg.axes(xs, ys, "time", "energy per unit length",
    opts.title ?? "boundary work vs free-energy change");
  const band = slack.map((s, k) => [xs(t[k]), ys(s + se[k])] as [number, number])
    .concat(slack.map((s, k) => [xs(t[k]), ys(s - se[k])] as [number, number]).reverse());
  svg.raw(`<polygon points="${band.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ")}" ` +
    `fill="#bbbbbb" fill-opacity="0.45" stroke="none"/>`);
  svg.line(xs(t[0]), ys(0), xs(t[t.length - 1]), ys(0), "#888888", 0.8);
  svg.polyline(t.map((v, k) => [xs(v), ys(W[k])] as [number, number]), STYLE.series[0], 2);
  svg.polyline(t.map((v, k) => [xs(v), ys(D[k])] as [number, number]), STYLE.series[1], 2);
  svg.polyline(t.map((v, k) => [xs(v), ys(slack[k])] as [number, number]),
    STYLE.series[2], 1.5, "4,3");
  svg.legend([["work W(t)", STYLE.series[0]], ["dF_total(t)", STYLE.series[1]],
    ["slack +- SE", STYLE.series[2]]], area.x[0] + 10, area.y[1] + 18);
  const final = slack[slack.length - 1];
  svg.text(area.x[1] - 4, area.y[0] - 8, `final slack ${fmt(final)}`, "end");
  return { svg: svg.render(), meta: { final_slack: final } };
}

// ---------------------------------------------------------------------------
// weak: residual magnitude per basis function, one line per chain size
// ---------------------------------------------------------------------------

export function renderWeak(inputs: ParsedCsv[], opts: FigureOptions = {}): FigureResult {
  const csv = inputs[0];
  const N = column(csv, "N");
  const k = column(csv, "basis_k");
  const rr = column(csv, "R_r");
  const rp = column(csv, "R_p");
  const sizes = uniqueSorted(N);
  const mags = N.map((_, row) => Math.abs(rr[row]) + Math.abs(rp[row]));
  const area = plotArea();
  const positive = mags.filter((m) => m > 0);
  const lo = positive.length ? Math.min(...positive) / 2 : 1e-12;
  const hi = Math.max(...mags, lo * 10) * 2;
  const xs = linearScale([Math.min(...k) - 0.5, Math.max(...k) + 0.5], area.x);
  const ys = logScale([lo, hi], area.y);
  const svg = new Svg(STYLE.width, STYLE.height, { "data-kind": "weak" });
  svg.axes(xs, ys, "test-function index k", "|R_r| + |R_p|",
    opts.title ?? "weak-form residuals");
  const legend: Array<[string, string]> = [];
  sizes.forEach((n, s) => {
    const pts: Array<[number, number]> = [];
    for (let row = 0; row < N.length; row++) {
      if (N[row] === n) {
        pts.push([xs(k[row]), ys(Math.max(mags[row], lo))]);
        svg.circle(xs(k[row]), ys(Math.max(mags[row], lo)), 3, STYLE.series[s % 8]);
      }
    }
    svg.polyline(pts, STYLE.series[s % 8], 1.5);
    legend.push([`N = ${n}`, STYLE.series[s % 8]]);
  });
  svg.legend(legend, area.x[1] - 110, area.y[1] + 18);
  return { svg: svg.render(), meta: { sizes: sizes.join(",") } };
}

// ---------------------------------------------------------------------------

export function render(kind: FigureKind, inputs: ParsedCsv[],
                       opts: FigureOptions = {}): FigureResult {
  if (inputs.length === 0) {
    throw new EmptyInputError("no inputs given");
  }
  switch (kind) {
    case "profiles":
      return renderProfiles(inputs, opts);
    case "heatmap":
      return renderHeatmap(inputs, opts);
    case "scaling":
      return renderScaling(inputs, opts);
    case "clausius":
      return renderClausius(inputs, opts);
    case "weak":
      return renderWeak(inputs, opts);
    default:
      throw new EmptyInputError(`unknown figure kind '${kind}'`);
  }
}
