import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";

import { parseCsv } from "../src/csv.js";
import { EmptyInputError } from "../src/csv.js";
import { render, renderScaling } from "../src/figures.js";

const FIXTURES = new URL("../fixtures/", import.meta.url).pathname;

const load = (name: string) => parseCsv(readFileSync(FIXTURES + name, "utf-8"), name);

describe("figure rendering", () => {
  it("profiles renders from chain frames plus a macro overlay", () => {
    const out = render("profiles", [
      load("frames_N32_rep0000.csv"), load("frames_N32_rep0001.csv"),
      load("macro_frames_N32.csv")]);
    expect(out.svg).toContain("data-kind=\"profiles\"");
    expect(out.svg).toContain("viscous reference");
    expect(out.meta.sites).toBe(32);
  });

  it("heatmap renders a space-time grid", () => {
    const out = render("heatmap", [load("frames_N32_rep0000.csv")]);
    expect(out.svg).toContain("data-kind=\"heatmap\"");
    expect((out.svg.match(/<rect /g) ?? []).length).toBeGreaterThan(100);
  });

  it("scaling annotates the fitted slope and reports it negative", () => {
    const out = render("scaling", [load("oneblock_scaling.csv")]);
    expect(out.svg).toContain("fitted slope");
    expect(Number(out.meta.slope)).toBeLessThan(0);
  });

  it("scaling slope annotation equals the recorded primary fit to 1e-12", () => {
    const csv = load("oneblock_scaling.csv");
    const out = renderScaling([csv]);
    const m = out.svg.match(/data-slope="([^"]+)"/);
    expect(m).not.toBeNull();
    const annotated = Number(m![1]);
    expect(Math.abs(annotated - Number(csv.meta.fit_slope))).toBeLessThan(1e-12);
  });

  it("clausius shows the slack band and final slack annotation", () => {
    const out = render("clausius", [load("clausius.csv")]);
    expect(out.svg).toContain("data-kind=\"clausius\"");
    expect(out.svg).toContain("final slack");
    expect(out.svg).toContain("<polygon");
  });

  it("weak renders one series per chain size", () => {
    const out = render("weak", [load("weak_residuals.csv")]);
    expect(out.svg).toContain("N = 32");
    expect(out.svg).toContain("N = 64");
  });

  it("is deterministic: identical inputs give identical bytes", () => {
    for (const [kind, files] of [
      ["profiles", ["frames_N32_rep0000.csv"]],
      ["heatmap", ["frames_N32_rep0000.csv"]],
      ["scaling", ["oneblock_scaling.csv"]],
      ["clausius", ["clausius.csv"]],
      ["weak", ["weak_residuals.csv"]],
    ] as const) {
      const a = render(kind, files.map(load)).svg;
      const b = render(kind, files.map(load)).svg;
      expect(a).toBe(b);
    }
  });

  it("refuses empty input lists", () => {
    expect(() => render("weak", [])).toThrow(EmptyInputError);
  });

  it("profiles refuses inputs without chain frames", () => {
    expect(() => render("profiles", [load("macro_frames_N32.csv")]))
      .toThrow(EmptyInputError);
  });
});
