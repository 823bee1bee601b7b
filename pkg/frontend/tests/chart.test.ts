import { describe, expect, it } from "vitest";

import { computeLayout, MARGIN, niceCeiling, type SeriesKey } from "../src/chart.js";
import { makeReading } from "./fakes.js";

const NOW = 1_060_000;
const WINDOW = 60_000;
const W = 760;
const H = 300;

const lay = (readings = [makeReading(200)], enabled: SeriesKey[] = ["p"]) =>
  computeLayout(readings, new Set(enabled), W, H, NOW, WINDOW);

describe("niceCeiling", () => {
  it.each([
    [0, 1],
    [0.7, 1],
    [1, 1],
    [3, 5],
    [99, 100],
    [230, 500],
    [1930, 2000],
    [1940, 2000],
    [5200, 10000],
  ])("rounds %d up to %d", (value, expected) => {
    expect(niceCeiling(value)).toBe(expected);
  });
});

describe("computeLayout", () => {
  it("flags an empty window and plots nothing", () => {
    const layout = lay([]);
    expect(layout.empty).toBe(true);
    expect(layout.series.every((s) => s.points.length === 0)).toBe(true);
  });

  it("excludes readings outside the window", () => {
    const inside = makeReading(250); // ts 1_050_000
    const before = makeReading(0); // ts 1_000_000, window starts at 1_000_000… exactly on edge
    const older = makeReading(0, { timestamp_ms: 999_999 });
    const layout = lay([older, before, inside]);
    const p = layout.series.find((s) => s.key === "p")!;
    expect(p.points).toHaveLength(2); // edge point included, older one not
    expect(layout.empty).toBe(false);
  });

  it("maps every reading to one point whose y inverts back to the API value", () => {
    const readings = [
      makeReading(200, { p: 1930.125 }),
      makeReading(230, { p: 0 }),
      makeReading(260, { p: 960.5 }),
    ];
    const layout = lay(readings);
    const p = layout.series.find((s) => s.key === "p")!;
    expect(p.points).toHaveLength(readings.length);

    const top = MARGIN.top;
    const bottom = H - MARGIN.bottom;
    readings.forEach((r, i) => {
      const [, y] = p.points[i];
      const recovered = ((bottom - y) / (bottom - top)) * layout.powerMax;
      expect(recovered).toBeCloseTo(r.p, 6);
    });
  });

  it("orders x coordinates with time", () => {
    const layout = lay([makeReading(150), makeReading(200), makeReading(250)]);
    const xs = layout.series[0].points.map(([x]) => x);
    expect(xs[0]).toBeLessThan(xs[1]);
    expect(xs[1]).toBeLessThan(xs[2]);
    expect(xs[0]).toBeGreaterThanOrEqual(MARGIN.left);
    expect(xs[2]).toBeLessThanOrEqual(W - MARGIN.right);
  });

  it("scales the power axis from the enabled series only", () => {
    const readings = [makeReading(200, { p: 52, q: 84.25, s: 99 })];
    const pOnly = computeLayout(readings, new Set<SeriesKey>(["p"]), W, H, NOW, WINDOW);
    expect(pOnly.powerMax).toBe(100);
    const withS = computeLayout(readings, new Set<SeriesKey>(["p", "s"]), W, H, NOW, WINDOW);
    expect(withS.powerMax).toBe(100);
    const kettle = computeLayout([makeReading(200)], new Set<SeriesKey>(["p", "s"]), W, H, NOW, WINDOW);
    expect(kettle.powerMax).toBe(2000);
  });

  it("keeps grid quantities on their own axis", () => {
    const layout = lay([makeReading(200)], ["p", "v_rms", "i_rms"]);
    expect(layout.powerMax).toBe(2000);
    expect(layout.gridMax).toBe(500); // 229.98 V → 500 ladder step
    const v = layout.series.find((s) => s.key === "v_rms")!;
    const top = MARGIN.top;
    const bottom = H - MARGIN.bottom;
    const recovered = ((bottom - v.points[0][1]) / (bottom - top)) * layout.gridMax;
    expect(recovered).toBeCloseTo(229.98, 6);
  });

  it("labels the time axis from the window start to now", () => {
    const layout = lay();
    expect(layout.xTicks[0].label).toBe("-60s");
    expect(layout.xTicks.at(-1)!.label).toBe("now");
  });

  it("produces matching tick counts on both value axes", () => {
    const layout = lay([makeReading(200)], ["p", "v_rms"]);
    expect(layout.leftTicks.length).toBe(layout.rightTicks.length);
    expect(layout.leftTicks.at(-1)!.label).toBe("2k");
  });
});
