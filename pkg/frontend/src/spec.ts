/**
 * Figure specification: which CSV, which axes, which column splits the
 * series (and optionally the panels).  Validation checks every referenced
 * column against the file's header before any drawing happens.
 */
import { ResultTable } from "./csv.js";

export type XAxis = "epsilon" | "poison_ratio" | "p";
export type SeriesKey = "p" | "k" | "n_repair" | "layers" | "repair_origin" | "none";
export type YAxis = "err_W" | "err_beta" | "acc" | "asr";

export interface FigureSpec {
  csvPath: string;
  xAxis: XAxis;
  seriesKey: SeriesKey;
  yAxis: YAxis;
  outPath: string;
  title?: string;
  /** optional second split: one panel per distinct value (fig-grid style) */
  panelKey?: string;
}

export class SpecError extends Error {}

/** Before/after metric pairs share one panel; error metrics are single. */
export function yColumns(y: YAxis): { column: string; label: string }[] {
  switch (y) {
    case "err_W":
      return [{ column: "err_W", label: "err_W" }];
    case "err_beta":
      return [{ column: "err_beta", label: "err_beta" }];
    case "acc":
      return [
        { column: "acc_clean_before", label: "before" },
        { column: "acc_clean_after", label: "after" },
      ];
    case "asr":
      return [
        { column: "asr_before", label: "before" },
        { column: "asr_after", label: "after" },
      ];
  }
}

export function logScale(y: YAxis): boolean {
  return y === "err_W" || y === "err_beta";
}

export function validateSpec(spec: FigureSpec, table: ResultTable): void {
  const have = new Set(table.columns);
  const wanted = [spec.xAxis as string];
  if (spec.seriesKey !== "none") wanted.push(spec.seriesKey);
  if (spec.panelKey) wanted.push(spec.panelKey);
  for (const { column } of yColumns(spec.yAxis)) wanted.push(column);
  for (const col of wanted) {
    if (!have.has(col)) {
      throw new SpecError(`column ${col} not present in CSV header`);
    }
  }
  if (table.rows.length === 0) {
    throw new SpecError("CSV has no data rows");
  }
}
