import type { ApiClient } from "./api.js";
import { formatPercent } from "./format.js";
import type { StatsResponse, Status } from "./types.js";

const STATUS_ORDER: Status[] = [
  "PENDING",
  "CONFIRMED_ABNORMAL",
  "OVERRIDDEN_NORMAL",
  "CONFIRMED_NORMAL",
  "OVERRIDDEN_ABNORMAL",
];

/**
 * Live queue counters: totals by status and body part plus the
 * model/reviewer agreement rate, all straight from the stats endpoint.
 * If a refresh fails the previous numbers stay on screen behind a
 * stale-data indicator rather than blanking out.
 */
export class StatsPanel {
  private stats: StatsResponse | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    this.root.innerHTML = `
      <h3>Queue stats <span id="stats-stale" class="stale-flag" hidden>stale — service unreachable</span></h3>
      <p id="stats-summary">–</p>
      <p id="stats-agreement">–</p>
      <ul id="stats-by-status" class="stat-list"></ul>
      <ul id="stats-by-part" class="stat-list"></ul>
    `;
  }

  async refresh(): Promise<void> {
    try {
      this.stats = await this.api.stats();
    } catch {
      this.root.classList.add("stale");
      this.root.querySelector<HTMLSpanElement>("#stats-stale")!.hidden = false;
      return;
    }
    this.root.classList.remove("stale");
    this.root.querySelector<HTMLSpanElement>("#stats-stale")!.hidden = true;
    this.render();
  }

  private render(): void {
    const s = this.stats!;
    this.root.querySelector<HTMLParagraphElement>("#stats-summary")!.textContent =
      `${s.total} studies on the worklist`;
    this.root.querySelector<HTMLParagraphElement>("#stats-agreement")!.textContent =
      `Agreement ${formatPercent(s.agreement_rate)} · ${s.decided} decided`;

    const byStatus = this.root.querySelector<HTMLUListElement>("#stats-by-status")!;
    byStatus.textContent = "";
    for (const status of STATUS_ORDER) {
      const li = document.createElement("li");
      li.dataset.status = status;
      li.textContent = `${status}: ${s.by_status[status] ?? 0}`;
      byStatus.appendChild(li);
    }

    const byPart = this.root.querySelector<HTMLUListElement>("#stats-by-part")!;
    byPart.textContent = "";
    for (const [part, count] of Object.entries(s.by_body_part)) {
      const li = document.createElement("li");
      li.dataset.part = part;
      li.textContent = `${part}: ${count}`;
      byPart.appendChild(li);
    }
  }
}
