#!/usr/bin/env node
import { readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { dirname } from "node:path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { parseCsv } from "./csv.js";
import { FigureKind, render } from "./figures.js";

export async function runCli(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .command("plot <kind>", "render a figure from chainlab CSVs", (y) =>
      y.positional("kind", {
        choices: ["profiles", "heatmap", "scaling", "clausius", "weak"] as const,
        demandOption: true,
      })
        .option("in", { type: "string", array: true, demandOption: true,
          describe: "input CSV file(s)" })
        .option("out", { type: "string", demandOption: true,
          describe: "output SVG path" })
        .option("title", { type: "string" }))
    .demandCommand(1)
    .strict()
    .exitProcess(false)
    .parse();

  const kind = args.kind as FigureKind;
  const inputs = (args.in as string[]).map((p) =>
    parseCsv(readFileSync(p, "utf-8"), p));
  const result = render(kind, inputs, { title: args.title as string | undefined });
  mkdirSync(dirname(args.out as string) || ".", { recursive: true });
  writeFileSync(args.out as string, result.svg, "utf-8");
  const meta = Object.entries(result.meta)
    .map(([k, v]) => `${k}=${v}`).join(" ");
  process.stderr.write(`wrote ${args.out} (${meta})\n`);
  return 0;
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.js") || entry.endsWith("chainlab-plot")) {
  runCli(hideBin(process.argv)).catch((err) => {
    process.stderr.write(`${err instanceof Error ? err.message : err}\n`);
    process.exitCode = 1;
  });
}
