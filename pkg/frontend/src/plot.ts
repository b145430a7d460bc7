/**
 * From a purifynet.v1 table to a figure: group rows by (panel, series, x),
 * summarize trials into median and interquartile range, render.
 */
import { writeFileSync } from "fs";

import { ResultTable, loadCsv, num } from "./csv.js";
import { FigureSpec, logScale, validateSpec, yColumns } from "./spec.js";
import { summarize } from "./stats.js";
import { Figure, PALETTE, PanelDef, SeriesDef, renderFigure } from "./svg.js";

function sortedUnique(values: string[]): string[] {
  const uniq = [...new Set(values)];
  const numeric = uniq.every((v) => v !== "" && Number.isFinite(Number(v)));
  return numeric
    ? uniq.sort((a, b) => Number(a) - Number(b))
    : uniq.sort();
}

export function buildPanels(spec: FigureSpec, table: ResultTable): PanelDef[] {
  validateSpec(spec, table);
  const rows = table.rows.filter((r) => r.error === "" || r.error === undefined);
  const panelValues = spec.panelKey
    ? sortedUnique(rows.map((r) => r[spec.panelKey as string]))
    : [""];
  const seriesValues = spec.seriesKey === "none"
    ? [""]
    : sortedUnique(rows.map((r) => r[spec.seriesKey]));
  const ys = yColumns(spec.yAxis);

  const panels: PanelDef[] = [];
  for (const pv of panelValues) {
    const inPanel = spec.panelKey ? rows.filter((r) => r[spec.panelKey as string] === pv) : rows;
    const series: SeriesDef[] = [];
    seriesValues.forEach((sv, si) => {
      const inSeries = spec.seriesKey === "none"
        ? inPanel
        : inPanel.filter((r) => r[spec.seriesKey] === sv);
      ys.forEach((yc, yi) => {
        const byX = new Map<number, number[]>();
        for (const r of inSeries) {
          const x = num(r, spec.xAxis);
          const v = num(r, yc.column);
          if (x === null || v === null) continue;
          if (!byX.has(x)) byX.set(x, []);
          byX.get(x)!.push(v);
        }
        if (byX.size === 0) return;
        const points = [...byX.entries()]
          .sort((a, b) => a[0] - b[0])
          .map(([x, vals]) => {
            const s = summarize(vals);
            return { x, median: s.median, q1: s.q1, q3: s.q3 };
          });
        const labelParts = [];
        if (sv !== "") labelParts.push(`${spec.seriesKey}=${sv}`);
        if (ys.length > 1) labelParts.push(yc.label);
        series.push({
          label: labelParts.join(" ") || yc.label,
          color: PALETTE[si % PALETTE.length],
          dash: ys.length > 1 && yi === 0,
          points,
        });
      });
    });
    if (series.length === 0) {
      throw new Error(`no plottable rows for panel ${spec.panelKey}=${pv}`);
    }
    panels.push({
      title: spec.panelKey ? `${spec.panelKey} = ${pv}` : (spec.title ?? spec.yAxis),
      xLabel: spec.xAxis,
      yLabel: spec.yAxis,
      log: logScale(spec.yAxis),
      series,
    });
  }
  return panels;
}

export function figureFor(spec: FigureSpec, table?: ResultTable): Figure {
  const data = table ?? loadCsv(spec.csvPath);
  return { title: spec.title, panels: buildPanels(spec, data) };
}

/** Render the spec and write the SVG; returns the byte string written. */
export function plot(spec: FigureSpec, table?: ResultTable): string {
  const svg = renderFigure(figureFor(spec, table));
  writeFileSync(spec.outPath, svg);
  return svg;
}
