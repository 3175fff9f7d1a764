/** Deterministic SVG scene building: identical inputs yield identical bytes.
 * No timestamps, no randomness; numbers are formatted with one fixed rule. */

export const STYLE = {
  width: 640,
  height: 420,
  margin: { left: 64, right: 20, top: 36, bottom: 48 },
  font: "12px sans-serif",
  axisColor: "#222222",
  gridColor: "#dddddd",
  series: ["#1f6fb2", "#d95f02", "#2a9d54", "#8a4fbf", "#c23b6f",
    "#7a6a00", "#008a8a", "#884422"],
} as const;

export function fmt(v: number): string {
  if (!Number.isFinite(v)) return "0";
  if (v === 0) return "0";
  const s = v.toPrecision(6);
  return s.includes(".") || s.includes("e")
    ? s.replace(/\.?0+($|e)/, "$1")
    : s;
}

export interface Scale {
  (v: number): number;
  domain: [number, number];
  range: [number, number];
  log: boolean;
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const f = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale;
  f.domain = domain;
  f.range = range;
  f.log = false;
  return f;
}

export function logScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const l0 = Math.log10(d0);
  const span = Math.log10(d1) - l0 || 1;
  const [r0, r1] = range;
  const f = ((v: number) => r0 + ((Math.log10(v) - l0) / span) * (r1 - r0)) as Scale;
  f.domain = domain;
  f.range = range;
  f.log = true;
  return f;
}

export function niceTicks(lo: number, hi: number, count = 6): number[] {
  if (!(hi > lo)) return [lo];
  const step0 = (hi - lo) / count;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const norm = step0 / mag;
  const step = (norm >= 5 ? 5 : norm >= 2 ? 2 : 1) * mag;
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = first; v <= hi + 1e-12 * Math.abs(step); v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

export function logTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.floor(Math.log10(lo)); e <= Math.ceil(Math.log10(hi)); e++) {
    const v = Math.pow(10, e);
    if (v >= lo / 1.0001 && v <= hi * 1.0001) ticks.push(v);
  }
  return ticks.length >= 2 ? ticks : [lo, hi];
}

export class Svg {
  private parts: string[] = [];

  constructor(readonly width = STYLE.width, readonly height = STYLE.height,
              attrs: Record<string, string> = {}) {
    const extra = Object.entries(attrs)
      .map(([k, v]) => ` ${k}="${v}"`).join("");
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}"${extra}>`,
      `<rect width="${width}" height="${height}" fill="#ffffff"/>`);
  }

  raw(s: string) {
    this.parts.push(s);
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, w = 1) {
    this.parts.push(`<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" ` +
      `y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${w}"/>`);
  }

  polyline(pts: Array<[number, number]>, stroke: string, w = 1.5, dash = "") {
    const d = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    const dashAttr = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(`<polyline points="${d}" fill="none" stroke="${stroke}" ` +
      `stroke-width="${w}"${dashAttr}/>`);
  }

  circle(x: number, y: number, r: number, fill: string) {
    this.parts.push(`<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${r}" fill="${fill}"/>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string) {
    this.parts.push(`<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" ` +
      `height="${fmt(h)}" fill="${fill}"/>`);
  }

  text(x: number, y: number, s: string, anchor = "start", fill = STYLE.axisColor,
       rotate = 0) {
    const rot = rotate ? ` transform="rotate(${rotate} ${fmt(x)} ${fmt(y)})"` : "";
    this.parts.push(`<text x="${fmt(x)}" y="${fmt(y)}" text-anchor="${anchor}" ` +
      `fill="${fill}" style="font: ${STYLE.font}"${rot}>${escapeXml(s)}</text>`);
  }

  axes(xs: Scale, ys: Scale, xLabel: string, yLabel: string, title: string) {
    const { left, top } = { left: xs.range[0], top: ys.range[1] };
    const right = xs.range[1];
    const bottom = ys.range[0];
    const xticks = xs.log ? logTicks(xs.domain[0], xs.domain[1])
      : niceTicks(xs.domain[0], xs.domain[1]);
    const yticks = ys.log ? logTicks(ys.domain[0], ys.domain[1])
      : niceTicks(ys.domain[0], ys.domain[1]);
    for (const t of xticks) {
      const x = xs(t);
      this.line(x, bottom, x, top, STYLE.gridColor, 0.5);
      this.line(x, bottom, x, bottom + 4, STYLE.axisColor, 1);
      this.text(x, bottom + 18, xs.log ? `1e${Math.round(Math.log10(t))}` : fmt(t), "middle");
    }
    for (const t of yticks) {
      const y = ys(t);
      this.line(left, y, right, y, STYLE.gridColor, 0.5);
      this.line(left - 4, y, left, y, STYLE.axisColor, 1);
      this.text(left - 8, y + 4, ys.log ? `1e${Math.round(Math.log10(t))}` : fmt(t), "end");
    }
    this.line(left, bottom, right, bottom, STYLE.axisColor, 1.2);
    this.line(left, bottom, left, top, STYLE.axisColor, 1.2);
    this.text((left + right) / 2, bottom + 36, xLabel, "middle");
    this.text(16, (top + bottom) / 2, yLabel, "middle", STYLE.axisColor, -90);
    this.text((left + right) / 2, top - 12, title, "middle");
  }

  legend(entries: Array<[string, string]>, x: number, y: number) {
    entries.forEach(([label, color], k) => {
      const yy = y + 16 * k;
      this.line(x, yy - 4, x + 18, yy - 4, color, 2.5);
      this.text(x + 24, yy, label);
    });
  }

  render(): string {
    return this.parts.join("\n") + "\n</svg>\n";
  }
}

export function plotArea(): { x: [number, number]; y: [number, number] } {
  const m = STYLE.margin;
  return {
    x: [m.left, STYLE.width - m.right],
    y: [STYLE.height - m.bottom, m.top],
  };
}

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}
