import type { ApiReading } from "./types.js";

/**
 * Time-series chart of the reported quantities, hand-rolled on a canvas.
 * Layout is computed as pure data (testable), painting is a dumb pass over
 * that data. Two value axes: watts/var/VA on the left for the power
 * triplet, volts/amps on the right for the grid quantities.
 */

export type SeriesKey = "p" | "q" | "s" | "v_rms" | "i_rms";
export type AxisSide = "power" | "grid";

export interface SeriesDef {
  key: SeriesKey;
  label: string;
  color: string;
  axis: AxisSide;
}

export const SERIES: SeriesDef[] = [
  { key: "p", label: "P (W)", color: "#e05c4b", axis: "power" },
  { key: "q", label: "Q (var)", color: "#5b9bd5", axis: "power" },
  { key: "s", label: "S (VA)", color: "#9b72c8", axis: "power" },
  { key: "v_rms", label: "V RMS (V)", color: "#58b368", axis: "grid" },
  { key: "i_rms", label: "I RMS (A)", color: "#d8a23a", axis: "grid" },
];

export const MARGIN = { left: 58, right: 52, top: 14, bottom: 26 };

export interface SeriesPoints {
  key: SeriesKey;
  color: string;
  /** Pixel-space polyline, oldest to newest. */
  points: Array<[number, number]>;
}

export interface Tick {
  pos: number;
  label: string;
}

export interface ChartLayout {
  width: number;
  height: number;
  plot: { left: number; top: number; right: number; bottom: number };
  series: SeriesPoints[];
  xTicks: Tick[];
  leftTicks: Tick[];
  rightTicks: Tick[];
  powerMax: number;
  gridMax: number;
  empty: boolean;
}

/** Smallest "nice" bound (1-2-5 ladder) at or above `value`. */
export function niceCeiling(value: number): number {
  if (!(value > 0)) return 1;
  const decade = Math.pow(10, Math.floor(Math.log10(value)));
  for (const step of [1, 2, 5, 10]) {
    if (value <= step * decade) return step * decade;
  }
  return 10 * decade;
}

function axisMax(
  readings: ApiReading[],
  enabled: Set<SeriesKey>,
  side: AxisSide,
): number {
  let max = 0;
  for (const def of SERIES) {
    if (def.axis !== side || !enabled.has(def.key)) continue;
    for (const r of readings) {
      const v = r[def.key];
      if (v > max) max = v;
    }
  }
  return niceCeiling(max);
}

function spanTicks(max: number, from: number, to: number, count: number): Tick[] {
  const ticks: Tick[] = [];
  for (let i = 0; i <= count; i++) {
    const value = (max * i) / count;
    const pos = to - ((to - from) * i) / count;
    ticks.push({ pos, label: formatValue(value) });
  }
  return ticks;
}

function formatValue(v: number): string {
  if (v >= 1000) return `${(v / 1000).toFixed(v % 1000 === 0 ? 0 : 1)}k`;
  if (Number.isInteger(v)) return String(v);
  return v.toFixed(1);
}

export function computeLayout(
  readings: ApiReading[],
  enabled: Set<SeriesKey>,
  width: number,
  height: number,
  nowMs: number,
  windowMs: number,
): ChartLayout {
  const plot = {
    left: MARGIN.left,
    top: MARGIN.top,
    right: width - MARGIN.right,
    bottom: height - MARGIN.bottom,
  };
  const xMin = nowMs - windowMs;
  const inWindow = readings.filter((r) => r.timestamp_ms >= xMin && r.timestamp_ms <= nowMs);

  const powerMax = axisMax(inWindow, enabled, "power");
  const gridMax = axisMax(inWindow, enabled, "grid");

  const xOf = (t: number) =>
    plot.left + ((t - xMin) / windowMs) * (plot.right - plot.left);
  const yOf = (v: number, max: number) =>
    plot.bottom - (v / max) * (plot.bottom - plot.top);

  const series: SeriesPoints[] = [];
  for (const def of SERIES) {
    if (!enabled.has(def.key)) continue;
    const max = def.axis === "power" ? powerMax : gridMax;
    series.push({
      key: def.key,
      color: def.color,
      points: inWindow.map((r) => [xOf(r.timestamp_ms), yOf(r[def.key], max)]),
    });
  }

  const xTicks: Tick[] = [];
  const divisions = 4;
  for (let i = 0; i <= divisions; i++) {
    const t = xMin + (windowMs * i) / divisions;
    const secondsAgo = Math.round((nowMs - t) / 1000);
    xTicks.push({ pos: xOf(t), label: secondsAgo === 0 ? "now" : `-${secondsAgo}s` });
  }

  return {
    width,
    height,
    plot,
    series,
    xTicks,
    leftTicks: spanTicks(powerMax, plot.top, plot.bottom, 4),
    rightTicks: spanTicks(gridMax, plot.top, plot.bottom, 4),
    powerMax,
    gridMax,
    empty: inWindow.length === 0,
  };
}

export function drawChart(ctx: CanvasRenderingContext2D, layout: ChartLayout): void {
  const { plot } = layout;
  ctx.clearRect(0, 0, layout.width, layout.height);

  ctx.strokeStyle = "#3a3f4a";
  ctx.fillStyle = "#9aa3b2";
  ctx.font = "11px system-ui, sans-serif";
  ctx.lineWidth = 1;

  for (const tick of layout.leftTicks) {
    ctx.beginPath();
    ctx.moveTo(plot.left, tick.pos);
    ctx.lineTo(plot.right, tick.pos);
    ctx.stroke();
    ctx.textAlign = "right";
    ctx.fillText(tick.label, plot.left - 6, tick.pos + 4);
  }
  for (const tick of layout.rightTicks) {
    ctx.textAlign = "left";
    ctx.fillText(tick.label, plot.right + 6, tick.pos + 4);
  }
  ctx.textAlign = "center";
  for (const tick of layout.xTicks) {
    ctx.fillText(tick.label, tick.pos, plot.bottom + 16);
  }

  ctx.strokeStyle = "#565e6d";
  ctx.strokeRect(plot.left, plot.top, plot.right - plot.left, plot.bottom - plot.top);

  for (const s of layout.series) {
    if (s.points.length === 0) continue;
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.6;
    ctx.beginPath();
    s.points.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
    ctx.stroke();
  }

  if (layout.empty) {
    ctx.fillStyle = "#9aa3b2";
    ctx.textAlign = "center";
    ctx.font = "13px system-ui, sans-serif";
    ctx.fillText(
      "no data in this window",
      (plot.left + plot.right) / 2,
      (plot.top + plot.bottom) / 2,
    );
  }
}
