// Wire types, field-for-field mirrors of the scoring service's JSON schemas.
// The UI never derives these values itself; everything here arrives over HTTP.

export type Status =
  | "PENDING"
  | "CONFIRMED_ABNORMAL"
  | "OVERRIDDEN_NORMAL"
  | "CONFIRMED_NORMAL"
  | "OVERRIDDEN_ABNORMAL";

export type Verdict = "ABNORMAL" | "NORMAL";

export type SortMode = "prob_desc" | "prob_asc" | "study_id_asc";

export interface WorklistItem {
  study_id: string;
  body_part: string;
  probability: number | null;
  image_count: number;
  status: Status;
  scored_at: string | null;
  model_prediction: Verdict | null;
  version: number;
}

export interface WorklistPage {
  items: WorklistItem[];
  total: number;
  page: number;
  page_size: number;
}

export interface ImageScore {
  index: number;
  path: string;
  probability: number | null;
  error: string | null;
  image_url: string;
  overlay_url: string;
}

export interface DecisionRecord {
  verdict: Verdict;
  note: string;
  reviewer: string;
  decided_at: string;
}

export interface StudyDetail {
  study_id: string;
  body_part: string;
  probability: number | null;
  status: Status;
  scored_at: string | null;
  model_prediction: Verdict | null;
  version: number;
  images: ImageScore[];
  decision: DecisionRecord | null;
}

export interface StatsResponse {
  total: number;
  by_status: Record<string, number>;
  by_body_part: Record<string, number>;
  decided: number;
  agreement_rate: number | null;
}

export interface HealthResponse {
  status: "ok";
  model_key: string;
  studies: number;
}

/** The status the service will assign for a verdict on a PENDING study.
 *
 * Used only for the optimistic chip shown while the POST is in flight;
 * the authoritative status always comes back in the service response.
 * An unscored study (no model prediction) never counts as agreement.
 */
export function decidedStatus(verdict: Verdict, modelPrediction: Verdict | null): Status {
  const agrees = modelPrediction === verdict;
  return `${agrees ? "CONFIRMED" : "OVERRIDDEN"}_${verdict}` as Status;
}
