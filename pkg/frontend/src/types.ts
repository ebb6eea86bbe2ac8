/** JSON shapes spoken by the review service HTTP API. */

export type VerdictLabel = "correct" | "false";

export interface Tally {
  correct: number;
  false: number;
  missed: number;
  undecided: number;
}

/** Precision/recall/F1 as computed by the server; null means undefined. */
export interface Metrics {
  precision: number | null;
  recall: number | null;
  f1: number | null;
  criterion: string;
}

export interface VerdictRecord {
  label: VerdictLabel;
  note?: string;
}

export interface MissedMark {
  id: string;
  point?: [number, number] | null;
  outline?: [number, number][] | null;
  mode: string;
  note?: string;
}

export interface SessionJson {
  id: string;
  region: string;
  status: "open" | "closed";
  candidates: number[];
  candidate_count: number;
  empty: boolean;
  verdicts: Record<string, VerdictRecord>;
  missed: MissedMark[];
  amend_log: { candidate_id: number; from: string; to: string }[];
  tally: Tally;
  live_metrics: Metrics;
  next_undecided: number | null;
  created_at: string;
  updated_at: string;
  warning?: ServiceWarning;
}

export interface ServiceWarning {
  code: string;
  message: string;
  overlapping_candidates?: number[];
}

/** Affine from fractional crop pixel (col, row) to world (x, y). */
export interface CropGeo {
  x0: number;
  y0: number;
  dx: number;
  dy: number;
  rx: number;
  ry: number;
}

export interface OverlayPart {
  exterior: [number, number][];
  holes: [number, number][][];
}

export interface CandidateJson {
  index: number;
  installation_id: number;
  tile_id: string;
  pixel_count: number;
  area_m2: number;
  centroid_world: [number, number];
  verdict: VerdictRecord | null;
  crop_url: string;
  crop: {
    width: number;
    height: number;
    col0: number;
    row0: number;
    centroid_px: [number, number];
    geo: CropGeo;
  };
  overlay: { parts: OverlayPart[] };
}

export interface MetricsResponse {
  session: string;
  region: string;
  metrics: Metrics;
  counts: Tally;
}

export interface SessionListing {
  sessions: {
    id: string;
    region: string;
    status: string;
    candidate_count: number;
    tally: Tally;
  }[];
}

export interface SessionCreateBody {
  bundle?: string;
  region?: string;
  predictions?: string;
  tiles?: { tile_id: string; path: string }[];
  crop_padding_m?: number;
}
