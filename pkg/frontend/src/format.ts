/** Display formatting for the metrics panel. */

import type { Metrics } from "./types.js";

export const UNDEFINED_METRIC = "—"; // em dash, never "0"

/** Three-decimal metric; null/undefined/NaN render as an em dash. */
export function fmtMetric(v: number | null | undefined): string {
  if (v === null || v === undefined || Number.isNaN(v)) {
    return UNDEFINED_METRIC;
  }
  return v.toFixed(3);
}

export interface MetricsView {
  precision: string;
  recall: string;
  f1: string;
}

export function fmtMetrics(m: Metrics): MetricsView {
  return {
    precision: fmtMetric(m.precision),
    recall: fmtMetric(m.recall),
    f1: fmtMetric(m.f1),
  };
}

export function fmtArea(areaM2: number): string {
  return `${areaM2.toFixed(1)} m²`;
}
