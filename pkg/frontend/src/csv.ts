/**
 * Reader for purifynet.v1 result files: a `# schema=purifynet.v1` comment
 * line, a header row, then one row per (cell, trial).
 */
import { readFileSync } from "fs";

export const SCHEMA = "purifynet.v1";

export interface ResultTable {
  columns: string[];
  rows: Record<string, string>[];
}

export class CsvError extends Error {}

/** Minimal CSV field splitter; purifynet.v1 never quotes or embeds commas. */
function splitLine(line: string): string[] {
  return line.split(",");
}

export function parseCsv(text: string): ResultTable {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0 || lines[0].trim() !== `# schema=${SCHEMA}`) {
    throw new CsvError(`missing "# schema=${SCHEMA}" marker`);
  }
  if (lines.length < 2) {
    throw new CsvError("no header row");
  }
  const columns = splitLine(lines[1]);
  const rows = lines.slice(2).map((line, i) => {
    const parts = splitLine(line);
    if (parts.length !== columns.length) {
      throw new CsvError(`row ${i + 1}: ${parts.length} fields, expected ${columns.length}`);
    }
    const rec: Record<string, string> = {};
    columns.forEach((c, j) => (rec[c] = parts[j]));
    return rec;
  });
  return { columns, rows };
}

export function loadCsv(path: string): ResultTable {
  return parseCsv(readFileSync(path, "utf8"));
}

/** Numeric cell access; empty fields and failed trials surface as null. */
export function num(row: Record<string, string>, column: string): number | null {
  const raw = row[column];
  if (raw === undefined) throw new CsvError(`missing column ${column}`);
  if (raw === "") return null;
  const v = Number(raw);
  return Number.isFinite(v) ? v : null;
}
