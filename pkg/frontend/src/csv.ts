import Papa from "papaparse";

export const SUPPORTED_SCHEMA = 1;

export class SchemaMismatchError extends Error {}
export class EmptyInputError extends Error {}

export interface ParsedCsv {
  /** schema version from the '# schema=N' header */
  schema: number;
  /** key=value pairs found in '#' comment lines (e.g. fit_slope) */
  meta: Record<string, string>;
  /** free-form comment lines that are not key=value */
  comments: string[];
  columns: string[];
  /** numeric rows, one entry per column */
  rows: number[][];
  source: string;
}

/** Parse a chainlab CSV: '#' header comments, then a column row, then data. */
export function parseCsv(text: string, source = "<memory>"): ParsedCsv {
  const meta: Record<string, string> = {};
  const comments: string[] = [];
  const bodyLines: string[] = [];
  for (const raw of text.split(/\r?\n/)) {
    const line = raw.trimEnd();
    if (line.startsWith("#")) {
      const body = line.slice(1).trim();
      const eq = body.indexOf("=");
      if (eq > 0 && !body.slice(0, eq).includes(" ")) {
        meta[body.slice(0, eq)] = body.slice(eq + 1);
      } else {
        comments.push(body);
      }
    } else if (line.length > 0) {
      bodyLines.push(line);
    }
  }
  if (!("schema" in meta)) {
    throw new SchemaMismatchError(`${source}: missing '# schema=' header`);
  }
  const schema = Number(meta.schema);
  if (schema !== SUPPORTED_SCHEMA) {
    throw new SchemaMismatchError(
      `${source}: schema ${meta.schema} not supported (expected ${SUPPORTED_SCHEMA})`);
  }
  const parsed = Papa.parse<string[]>(bodyLines.join("\n"), { skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    throw new EmptyInputError(`${source}: ${parsed.errors[0].message}`);
  }
  const table = parsed.data;
  if (table.length < 2) {
    throw new EmptyInputError(`${source}: no data rows`);
  }
  const columns = table[0];
  const rows = table.slice(1).map((cells) => cells.map(Number));
  return { schema, meta, comments, columns, rows, source };
}

export function column(csv: ParsedCsv, name: string): number[] {
  const k = csv.columns.indexOf(name);
  if (k < 0) {
    throw new EmptyInputError(`${csv.source}: missing column '${name}'`);
  }
  return csv.rows.map((r) => r[k]);
}

export function hasColumn(csv: ParsedCsv, name: string): boolean {
  return csv.columns.includes(name);
}

export function uniqueSorted(values: number[]): number[] {
  return [...new Set(values)].sort((a, b) => a - b);
}
