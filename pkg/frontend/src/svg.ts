/**
 * Deterministic SVG rendering: same input data, byte-identical output.
 * No wall-clock, no randomness, fixed number formatting, generic fonts.
 */

export interface SeriesDef {
  label: string;
  color: string;
  dash?: boolean;
  points: { x: number; median: number; q1: number; q3: number }[];
}

export interface PanelDef {
  title: string;
  xLabel: string;
  yLabel: string;
  log: boolean;
  series: SeriesDef[];
}

export interface Figure {
  title?: string;
  panels: PanelDef[];
}

export const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
];

const PANEL_W = 320;
const PANEL_H = 260;
const MARGIN = { left: 64, right: 16, top: 34, bottom: 46 };
const GAP = 26;

/** Fixed-notation/exponent formatter that never varies by locale. */
export function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) {
    const e = Math.floor(Math.log10(a));
    const mant = v / Math.pow(10, e);
    const m = Math.round(mant * 100) / 100;
    return `${m}e${e}`;
  }
  return String(Math.round(v * 1e4) / 1e4);
}

function px(v: number): string {
  return (Math.round(v * 100) / 100).toFixed(2);
}

interface Scale {
  (v: number): number;
  ticks: number[];
}

function linearScale(lo: number, hi: number, out0: number, out1: number): Scale {
  if (hi <= lo) hi = lo + 1;
  const pad = 0.04 * (hi - lo);
  const a = lo - pad;
  const b = hi + pad;
  const f = ((v: number) => out0 + ((v - a) / (b - a)) * (out1 - out0)) as Scale;
  const step = niceStep((b - a) / 5);
  const first = Math.ceil(a / step) * step;
  f.ticks = [];
  for (let t = first; t <= b + 1e-12; t += step) f.ticks.push(Math.round(t / step) * step);
  return f;
}

function niceStep(raw: number): number {
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const r = raw / mag;
  if (r < 1.5) return mag;
  if (r < 3.5) return 2 * mag;
  if (r < 7.5) return 5 * mag;
  return 10 * mag;
}

function logScale(lo: number, hi: number, out0: number, out1: number): Scale {
  const a = Math.floor(Math.log10(lo)) - 0.2;
  const b = Math.ceil(Math.log10(hi)) + 0.2;
  const f = ((v: number) =>
    out0 + ((Math.log10(v) - a) / (b - a)) * (out1 - out0)) as Scale;
  f.ticks = [];
  const span = Math.ceil(b) - Math.floor(a);
  const every = span > 8 ? Math.ceil(span / 8) : 1;
  for (let e = Math.ceil(a); e <= Math.floor(b); e += every) f.ticks.push(Math.pow(10, e));
  return f;
}

const LOG_FLOOR = 1e-16;

function clampLog(v: number): number {
  return Math.max(v, LOG_FLOOR);
}

function renderPanel(panel: PanelDef, x0: number, y0: number): string {
  const innerW = PANEL_W - MARGIN.left - MARGIN.right;
  const innerH = PANEL_H - MARGIN.top - MARGIN.bottom;
  const left = x0 + MARGIN.left;
  const top = y0 + MARGIN.top;

  const xs = panel.series.flatMap((s) => s.points.map((p) => p.x));
  let vals = panel.series.flatMap((s) => s.points.flatMap((p) => [p.median, p.q1, p.q3]));
  if (panel.log) vals = vals.map(clampLog);
  const sx = linearScale(Math.min(...xs), Math.max(...xs), left, left + innerW);
  const sy = panel.log
    ? logScale(Math.min(...vals), Math.max(...vals), top + innerH, top)
    : linearScale(Math.min(...vals), Math.max(...vals), top + innerH, top);
  const val = panel.log ? clampLog : (v: number) => v;

  const parts: string[] = [];
  parts.push(`<rect x="${px(left)}" y="${px(top)}" width="${px(innerW)}" height="${px(innerH)}" fill="none" stroke="#333333" stroke-width="1"/>`);
  for (const t of sx.ticks) {
    const tx = sx(t);
    if (tx < left - 0.5 || tx > left + innerW + 0.5) continue;
    parts.push(`<line x1="${px(tx)}" y1="${px(top + innerH)}" x2="${px(tx)}" y2="${px(top + innerH + 4)}" stroke="#333333" stroke-width="1"/>`);
    parts.push(`<text x="${px(tx)}" y="${px(top + innerH + 16)}" font-family="sans-serif" font-size="10" text-anchor="middle">${fmt(t)}</text>`);
  }
  for (const t of sy.ticks) {
    const ty = sy(t);
    if (ty < top - 0.5 || ty > top + innerH + 0.5) continue;
    parts.push(`<line x1="${px(left - 4)}" y1="${px(ty)}" x2="${px(left)}" y2="${px(ty)}" stroke="#333333" stroke-width="1"/>`);
    parts.push(`<text x="${px(left - 6)}" y="${px(ty + 3)}" font-family="sans-serif" font-size="10" text-anchor="end">${fmt(t)}</text>`);
    parts.push(`<line x1="${px(left)}" y1="${px(ty)}" x2="${px(left + innerW)}" y2="${px(ty)}" stroke="#dddddd" stroke-width="0.5"/>`);
  }

  for (const s of panel.series) {
    const pts = [...s.points].sort((a, b) => a.x - b.x);
    const band = [
      ...pts.map((p) => `${px(sx(p.x))},${px(sy(val(p.q3)))}`),
      ...[...pts].reverse().map((p) => `${px(sx(p.x))},${px(sy(val(p.q1)))}`),
    ].join(" ");
    parts.push(`<polygon points="${band}" fill="${s.color}" fill-opacity="0.15" stroke="none"/>`);
    const line = pts.map((p) => `${px(sx(p.x))},${px(sy(val(p.median)))}`).join(" ");
    const dash = s.dash ? ` stroke-dasharray="5,3"` : "";
    parts.push(`<polyline points="${line}" fill="none" stroke="${s.color}" stroke-width="1.6"${dash}/>`);
    for (const p of pts) {
      parts.push(`<circle cx="${px(sx(p.x))}" cy="${px(sy(val(p.median)))}" r="2.2" fill="${s.color}"/>`);
    }
  }

  parts.push(`<text x="${px(x0 + PANEL_W / 2)}" y="${px(y0 + 16)}" font-family="sans-serif" font-size="12" text-anchor="middle" font-weight="bold">${escapeXml(panel.title)}</text>`);
  parts.push(`<text x="${px(left + innerW / 2)}" y="${px(top + innerH + 34)}" font-family="sans-serif" font-size="11" text-anchor="middle">${escapeXml(panel.xLabel)}</text>`);
  parts.push(`<text x="${px(x0 + 14)}" y="${px(top + innerH / 2)}" font-family="sans-serif" font-size="11" text-anchor="middle" transform="rotate(-90 ${px(x0 + 14)} ${px(top + innerH / 2)})">${escapeXml(panel.yLabel)}</text>`);

  // legend
  let ly = top + 6;
  for (const s of panel.series) {
    const lx = left + innerW - 104;
    const dash = s.dash ? ` stroke-dasharray="5,3"` : "";
    parts.push(`<line x1="${px(lx)}" y1="${px(ly + 4)}" x2="${px(lx + 18)}" y2="${px(ly + 4)}" stroke="${s.color}" stroke-width="1.6"${dash}/>`);
    parts.push(`<text x="${px(lx + 22)}" y="${px(ly + 7)}" font-family="sans-serif" font-size="10">${escapeXml(s.label)}</text>`);
    ly += 13;
  }
  return parts.join("\n");
}

function escapeXml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderFigure(fig: Figure): string {
  const n = Math.max(1, fig.panels.length);
  const width = n * PANEL_W + (n - 1) * GAP + 8;
  const titlePad = fig.title ? 24 : 0;
  const height = PANEL_H + titlePad + 8;
  const parts = [
    `<?xml version="1.0" encoding="UTF-8"?>`,
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
    `<rect x="0" y="0" width="${width}" height="${height}" fill="#ffffff"/>`,
  ];
  if (fig.title) {
    parts.push(`<text x="${px(width / 2)}" y="17" font-family="sans-serif" font-size="14" text-anchor="middle" font-weight="bold">${escapeXml(fig.title)}</text>`);
  }
  fig.panels.forEach((panel, i) => {
    parts.push(renderPanel(panel, 4 + i * (PANEL_W + GAP), titlePad + 4));
  });
  parts.push(`</svg>`);
  return parts.join("\n") + "\n";
}
