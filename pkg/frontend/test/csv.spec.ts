import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";

import { EmptyInputError, SchemaMismatchError, column, parseCsv } from "../src/csv.js";

const FIXTURES = new URL("../fixtures/", import.meta.url).pathname;

describe("parseCsv", () => {
  it("parses a fixture with schema, meta and rows", () => {
    const csv = parseCsv(readFileSync(FIXTURES + "oneblock_scaling.csv", "utf-8"));
    expect(csv.schema).toBe(1);
    expect(csv.columns).toEqual(["N", "l", "sigma", "residual", "SE"]);
    expect(csv.rows.length).toBe(3);
    expect(csv.meta.fit_slope).toBeDefined();
    expect(Number(csv.meta.fit_slope)).toBeLessThan(0);
  });

  it("rejects a missing schema header", () => {
    expect(() => parseCsv("a,b\n1,2\n")).toThrow(SchemaMismatchError);
  });

  it("rejects an unsupported schema version", () => {
    expect(() => parseCsv("# schema=2\na,b\n1,2\n")).toThrow(SchemaMismatchError);
  });

  it("rejects empty data", () => {
    expect(() => parseCsv("# schema=1\na,b\n")).toThrow(EmptyInputError);
  });

  it("extracts named columns", () => {
    const csv = parseCsv("# schema=1\nx,y\n1,4\n2,9\n");
    expect(column(csv, "y")).toEqual([4, 9]);
    expect(() => column(csv, "z")).toThrow(EmptyInputError);
  });
});
