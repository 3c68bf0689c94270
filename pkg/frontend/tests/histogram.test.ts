import { describe, expect, it } from "vitest";

import { curatedWithinAuto, fwhm, ghostBarModel } from "../src/histogram.js";

describe("ghost bar model", () => {
  const auto = { edges: [0, 5, 10, 15, 20], counts: [2, 0, 5, 3] };

  it("aligns equal-length histograms bin by bin", () => {
    const current = { edges: [0, 5, 10, 15, 20], counts: [2, 0, 4, 1] };
    const bars = ghostBarModel(auto, current);
    expect(bars).toHaveLength(4);
    expect(bars[2]).toEqual({ lo: 10, hi: 15, auto: 5, current: 4 });
  });

  it("pads a shorter curated histogram with zeros", () => {
    // removals dropped the widest elements: the current histogram is shorter
    const current = { edges: [0, 5, 10], counts: [2, 0] };
    const bars = ghostBarModel(auto, current);
    expect(bars).toHaveLength(4);
    expect(bars[3]).toEqual({ lo: 15, hi: 20, auto: 3, current: 0 });
  });

  it("rejects mismatched bin widths", () => {
    const other = { edges: [0, 4, 8], counts: [1, 1] };
    expect(() => ghostBarModel(auto, other)).toThrow(/bin width/);
  });

  it("flags bars that exceed their auto count", () => {
    const ok = ghostBarModel(auto, { edges: [0, 5], counts: [1] });
    expect(curatedWithinAuto(ok)).toBe(true);
    const bad = ghostBarModel(auto, { edges: [0, 5], counts: [3] });
    expect(curatedWithinAuto(bad)).toBe(false);
  });
});

describe("fwhm", () => {
  it("matches the analytic width of a gaussian", () => {
    const sigma = 6;
    const values = Array.from({ length: 101 }, (_, i) =>
      Math.exp(-((i - 50) ** 2) / (2 * sigma * sigma)),
    );
    const width = fwhm(values);
    expect(width).not.toBeNull();
    expect(width!).toBeCloseTo(2 * Math.sqrt(2 * Math.log(2)) * sigma, 1);
  });

  it("interpolates crossings exactly on a triangle", () => {
    // peak 4 at index 4, half max 2 crossed exactly at indices 2 and 6
    const width = fwhm([0, 1, 2, 3, 4, 3, 2, 1, 0]);
    expect(width).toBe(4);
  });

  it("returns null when the profile never falls to half max", () => {
    expect(fwhm([1, 1, 1, 1, 1])).toBeNull();
    expect(fwhm([0.2, 0.5, 1, 0.9, 0.8])).toBeNull(); // right side stays high
    expect(fwhm([1, 0.4])).toBeNull(); // too short
  });
});
