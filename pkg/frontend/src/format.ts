import type { Status, Verdict } from "./types.js";

// Presentation helpers only: the service owns every number shown in the UI,
// these functions just turn wire values into display strings and CSS hooks.

export function formatProbability(p: number | null): string {
  return p === null ? "—" : p.toFixed(2);
}

export function formatPercent(rate: number | null): string {
  return rate === null ? "—" : `${Math.round(rate * 100)}%`;
}

export function statusChipClass(status: Status): string {
  return `chip chip-${status.toLowerCase()}`;
}

export function probBadgeClass(prediction: Verdict | null): string {
  if (prediction === "ABNORMAL") return "prob prob-abnormal";
  if (prediction === "NORMAL") return "prob prob-normal";
  return "prob prob-unscored";
}
