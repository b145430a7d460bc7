#!/usr/bin/env node
/**
 * purifynet-figures: render purifynet.v1 CSVs as SVG figures.
 *
 * Commands:
 *   plot      --csv results.csv --x epsilon --series p --y err_W --out fig.svg
 *             [--panel k] [--title ...]
 *   recovery  --csv results.csv [--series p] [--panel k] [--y err_W]
 *             --out fig.svg            (phase-transition grid layout)
 *   backdoor  --csv results.csv --out fig.svg [--series n_repair]
 *             (two panels: accuracy and attack success vs poison ratio)
 */
import { writeFileSync } from "fs";
import { pathToFileURL } from "url";

import { loadCsv } from "./csv.js";
import { FigureSpec, SeriesKey, XAxis, YAxis } from "./spec.js";
import { buildPanels, plot } from "./plot.js";
import { renderFigure } from "./svg.js";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`bad arguments near ${key}`);
    }
    flags.set(key.slice(2), argv[i + 1]);
  }
  return flags;
}

function need(flags: Map<string, string>, key: string): string {
  const v = flags.get(key);
  if (v === undefined) throw new Error(`missing --${key}`);
  return v;
}

function usage(): void {
  process.stderr.write(
    "usage: purifynet-figures <plot|recovery|backdoor> --csv FILE --out FILE [options]\n" +
    "  plot:     --x epsilon|poison_ratio|p --series p|k|n_repair|none --y err_W|err_beta|acc|asr [--panel COL] [--title T]\n" +
    "  recovery: [--series p] [--panel k] [--y err_W]\n" +
    "  backdoor: [--series n_repair]\n");
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    const flags = parseFlags(rest);
    if (command === "plot") {
      plot({
        csvPath: need(flags, "csv"),
        xAxis: need(flags, "x") as XAxis,
        seriesKey: need(flags, "series") as SeriesKey,
        yAxis: need(flags, "y") as YAxis,
        outPath: need(flags, "out"),
        title: flags.get("title"),
        panelKey: flags.get("panel"),
      });
    } else if (command === "recovery") {
      plot({
        csvPath: need(flags, "csv"),
        xAxis: "epsilon",
        seriesKey: (flags.get("series") ?? "p") as SeriesKey,
        yAxis: (flags.get("y") ?? "err_W") as YAxis,
        outPath: need(flags, "out"),
        title: flags.get("title"),
        panelKey: flags.get("panel") ?? "k",
      });
    } else if (command === "backdoor") {
      const csvPath = need(flags, "csv");
      const table = loadCsv(csvPath);
      const series = (flags.get("series") ?? "n_repair") as SeriesKey;
      const base = {
        csvPath,
        xAxis: "poison_ratio" as XAxis,
        seriesKey: series,
        outPath: need(flags, "out"),
      };
      const fig = {
        title: flags.get("title"),
        panels: [
          ...buildPanels({ ...base, yAxis: "acc" } as FigureSpec, table),
          ...buildPanels({ ...base, yAxis: "asr" } as FigureSpec, table),
        ],
      };
      writeFileSync(base.outPath, renderFigure(fig));
    } else {
      usage();
      return 2;
    }
    return 0;
  } catch (err) {
    process.stderr.write(`purifynet-figures: error: ${(err as Error).message}\n`);
    return 1;
  }
}

if (import.meta.url === pathToFileURL(process.argv[1] ?? "").href) {
  process.exitCode = main(process.argv.slice(2));
}
