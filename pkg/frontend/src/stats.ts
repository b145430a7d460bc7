/** Median and quartiles with linear interpolation (matches numpy defaults). */

export function percentile(sorted: number[], q: number): number {
  if (sorted.length === 0) throw new Error("empty sample");
  const pos = (q / 100) * (sorted.length - 1);
  const lo = Math.floor(pos);
  const hi = Math.ceil(pos);
  if (lo === hi) return sorted[lo];
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo);
}

export interface Summary {
  median: number;
  q1: number;
  q3: number;
  count: number;
}

export function summarize(values: number[]): Summary {
  const sorted = [...values].sort((a, b) => a - b);
  return {
    median: percentile(sorted, 50),
    q1: percentile(sorted, 25),
    q3: percentile(sorted, 75),
    count: sorted.length,
  };
}
