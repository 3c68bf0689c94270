// Auto-vs-curated histogram comparison model. The curated view always
// keeps the automatic counts visible as ghost bars behind the current
// ones, so removals read as bars shrinking in place.

import type { Histogram } from "./types.js";

export interface GhostBar {
  lo: number;
  hi: number;
  auto: number;
  current: number;
}

function binWidth(h: Histogram): number {
  if (h.edges.length < 2) throw new Error("histogram needs at least one bin");
  return h.edges[1] - h.edges[0];
}

/**
 * Align two fixed-width, zero-anchored histograms bin by bin. The
 * curated histogram may be shorter (removals can only lower the max);
 * missing trailing bins read as zero.
 */
export function ghostBarModel(auto: Histogram, current: Histogram): GhostBar[] {
  const w = binWidth(auto);
  if (Math.abs(binWidth(current) - w) > 1e-9) {
    throw new Error("histograms use different bin widths");
  }
  const n = Math.max(auto.counts.length, current.counts.length);
  const bars: GhostBar[] = [];
  for (let i = 0; i < n; i++) {
    bars.push({
      lo: i * w,
      hi: (i + 1) * w,
      auto: auto.counts[i] ?? 0,
      current: current.counts[i] ?? 0,
    });
  }
  return bars;
}

/** Removal-only curation can never grow a bin past its auto count. */
export function curatedWithinAuto(bars: GhostBar[]): boolean {
  return bars.every((b) => b.current <= b.auto);
}

/**
 * Full width at half maximum of a single-peaked profile, half-max
 * crossings linearly interpolated. Returns null when the profile never
 * falls below half max on either side (no measurable width).
 */
export function fwhm(values: number[]): number | null {
  if (values.length < 3) return null;
  let i = 0;
  for (let k = 1; k < values.length; k++) {
    if (values[k] > values[i]) i = k;
  }
  const half = values[i] / 2;
  let li = i;
  while (li > 0 && values[li - 1] > half) li--;
  if (li === 0) return null;
  const left = li - 1 + (half - values[li - 1]) / (values[li] - values[li - 1]);
  let ri = i;
  while (ri < values.length - 1 && values[ri + 1] > half) ri++;
  if (ri === values.length - 1) return null;
  const right = ri + (values[ri] - half) / (values[ri] - values[ri + 1]);
  return right - left;
}
