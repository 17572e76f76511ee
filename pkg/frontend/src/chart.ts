// Per-slice review chart: thresholds and areas against slice index, as
// SVG polyline points. Pure data -> string so it is testable without a DOM.

import type { SliceResult } from "./api.js";

export interface ChartLayout {
  width: number;
  height: number;
  padding: number;
}

export const DEFAULT_LAYOUT: ChartLayout = { width: 420, height: 120, padding: 8 };

function scale(
  values: number[],
  lo: number,
  hi: number,
  layout: ChartLayout,
): string {
  const { width, height, padding } = layout;
  const innerW = width - 2 * padding;
  const innerH = height - 2 * padding;
  const n = values.length;
  const span = hi - lo;
  const pts: string[] = [];
  for (let i = 0; i < n; i++) {
    const v = values[i] ?? 0;
    const x = n === 1 ? padding + innerW / 2 : padding + (i / (n - 1)) * innerW;
    const yFrac = span === 0 ? 0.5 : (v - lo) / span;
    const y = padding + (1 - yFrac) * innerH;
    pts.push(`${x.toFixed(2)},${y.toFixed(2)}`);
  }
  return pts.join(" ");
}

/** Polyline points for thresholds; fixed [0, 1] scale. */
export function thresholdPolyline(
  perSlice: SliceResult[],
  layout: ChartLayout = DEFAULT_LAYOUT,
): string {
  return scale(
    perSlice.map((r) => r.t_s),
    0,
    1,
    layout,
  );
}

/** Polyline points for per-slice areas; scale spans [0, max area]. */
export function areaPolyline(
  perSlice: SliceResult[],
  layout: ChartLayout = DEFAULT_LAYOUT,
): string {
  const areas = perSlice.map((r) => r.area_px);
  const hi = areas.length ? Math.max(...areas) : 1;
  return scale(areas, 0, hi === 0 ? 1 : hi, layout);
}
