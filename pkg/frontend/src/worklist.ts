import type { ApiClient } from "./api.js";
import { formatProbability, probBadgeClass, statusChipClass } from "./format.js";
import type { FilterPrefs } from "./prefs.js";
import { loadFilterPrefs, saveFilterPrefs } from "./prefs.js";
import type { SortMode, Status, WorklistItem } from "./types.js";

export interface WorklistOptions {
  api: ApiClient;
  onOpenStudy: (studyId: string) => void;
  pageSize?: number;
}

const STATUSES: Status[] = [
  "PENDING",
  "CONFIRMED_ABNORMAL",
  "OVERRIDDEN_NORMAL",
  "CONFIRMED_NORMAL",
  "OVERRIDDEN_ABNORMAL",
];

const BODY_PARTS = ["ELBOW", "FINGER", "FOREARM", "HAND", "HUMERUS", "SHOULDER", "WRIST"];

const SORTS: Array<[SortMode, string]> = [
  ["prob_desc", "Most suspicious first"],
  ["prob_asc", "Least suspicious first"],
  ["study_id_asc", "Study id"],
];

/**
 * The triage queue. Rows are rendered in exactly the order the service
 * returns them — the panel never re-sorts on the client; changing the sort
 * selector just asks the service for a differently-ordered page.
 */
export class WorklistPanel {
  private items: WorklistItem[] = [];
  private total = 0;
  private page = 1;
  private readonly pageSize: number;
  private filters: FilterPrefs;

  constructor(
    private readonly root: HTMLElement,
    private readonly opts: WorklistOptions,
  ) {
    this.pageSize = opts.pageSize ?? 50;
    this.filters = loadFilterPrefs();
    this.root.innerHTML = this.template();
    this.bindControls();
  }

  get currentOrder(): string[] {
    return this.items.map((item) => item.study_id);
  }

  private template(): string {
    const statusOptions = STATUSES.map((s) => `<option value="${s}">${s}</option>`).join("");
    const partOptions = BODY_PARTS.map((p) => `<option value="${p}">${p}</option>`).join("");
    const sortOptions = SORTS.map(([v, label]) => `<option value="${v}">${label}</option>`).join("");
    return `
      <div class="banner" id="worklist-banner" hidden>
        <span class="banner-text"></span>
        <button type="button" class="retry">Retry</button>
      </div>
      <div class="filters">
        <label>Status
          <select id="filter-status"><option value="">All</option>${statusOptions}</select>
        </label>
        <label>Body part
          <select id="filter-body-part"><option value="">All</option>${partOptions}</select>
        </label>
        <label>Order
          <select id="filter-sort">${sortOptions}</select>
        </label>
      </div>
      <table class="worklist">
        <thead>
          <tr><th>p(abnormal)</th><th>Study</th><th>Body part</th><th>Views</th><th>Status</th><th>Scored</th></tr>
        </thead>
        <tbody id="worklist-rows"></tbody>
      </table>
      <div class="worklist-footer">
        <span id="worklist-count"></span>
        <button type="button" id="page-prev">&laquo; Prev</button>
        <button type="button" id="page-next">Next &raquo;</button>
      </div>
    `;
  }

  private bindControls(): void {
    const status = this.root.querySelector<HTMLSelectElement>("#filter-status")!;
    const bodyPart = this.root.querySelector<HTMLSelectElement>("#filter-body-part")!;
    const sort = this.root.querySelector<HTMLSelectElement>("#filter-sort")!;
    status.value = this.filters.status;
    bodyPart.value = this.filters.bodyPart;
    sort.value = this.filters.sort;

    status.addEventListener("change", () => {
      this.filters = { ...this.filters, status: status.value as Status | "" };
      this.filtersChanged();
    });
    bodyPart.addEventListener("change", () => {
      this.filters = { ...this.filters, bodyPart: bodyPart.value };
      this.filtersChanged();
    });
    sort.addEventListener("change", () => {
      this.filters = { ...this.filters, sort: sort.value as SortMode };
      this.filtersChanged();
    });

    this.root.querySelector<HTMLButtonElement>(".retry")!.addEventListener("click", () => {
      void this.refresh();
    });
    this.root.querySelector<HTMLButtonElement>("#page-prev")!.addEventListener("click", () => {
      if (this.page > 1) {
        this.page -= 1;
        void this.refresh();
      }
    });
    this.root.querySelector<HTMLButtonElement>("#page-next")!.addEventListener("click", () => {
      if (this.page * this.pageSize < this.total) {
        this.page += 1;
        void this.refresh();
      }
    });
  }

  private filtersChanged(): void {
    saveFilterPrefs(this.filters);
    this.page = 1;
    void this.refresh();
  }

  async refresh(): Promise<void> {
    try {
      const page = await this.opts.api.worklist({
        status: this.filters.status,
        bodyPart: this.filters.bodyPart,
        sort: this.filters.sort,
        page: this.page,
        pageSize: this.pageSize,
      });
      this.items = page.items;
      this.total = page.total;
      this.hideBanner();
      this.renderRows();
    } catch (err) {
      this.showBanner(err instanceof Error ? err.message : String(err));
    }
  }

  /**
   * Reconcile one row from a decision/re-open response without refetching.
   * If the new status no longer matches the active status filter the row
   * leaves the list; order is otherwise untouched (decisions never change
   * the model probability the service sorted by).
   */
  applyDecisionResult(item: WorklistItem): void {
    const idx = this.items.findIndex((row) => row.study_id === item.study_id);
    if (idx < 0) return;
    if (this.filters.status && item.status !== this.filters.status) {
      this.items.splice(idx, 1);
      this.total -= 1;
    } else {
      this.items[idx] = item;
    }
    this.renderRows();
  }

  private showBanner(message: string): void {
    const banner = this.root.querySelector<HTMLDivElement>("#worklist-banner")!;
    banner.querySelector<HTMLSpanElement>(".banner-text")!.textContent =
      `Worklist unavailable: ${message}`;
    banner.hidden = false;
    this.root.classList.add("blocked");
  }

  private hideBanner(): void {
    this.root.querySelector<HTMLDivElement>("#worklist-banner")!.hidden = true;
    this.root.classList.remove("blocked");
  }

  private renderRows(): void {
    const tbody = this.root.querySelector<HTMLTableSectionElement>("#worklist-rows")!;
    tbody.textContent = "";
    for (const item of this.items) {
      tbody.appendChild(this.buildRow(item));
    }
    if (this.items.length === 0) {
      const tr = document.createElement("tr");
      tr.className = "empty";
      const td = document.createElement("td");
      td.colSpan = 6;
      td.textContent = "No studies match the current filters.";
      tr.appendChild(td);
      tbody.appendChild(tr);
    }
    const count = this.root.querySelector<HTMLSpanElement>("#worklist-count")!;
    const pages = Math.max(1, Math.ceil(this.total / this.pageSize));
    count.textContent = `${this.total} studies · page ${this.page}/${pages}`;
  }

  private buildRow(item: WorklistItem): HTMLTableRowElement {
    const tr = document.createElement("tr");
    tr.dataset.studyId = item.study_id;
    tr.className = item.status === "PENDING" ? "row row-pending" : "row";

    const prob = document.createElement("td");
    const badge = document.createElement("span");
    badge.className = probBadgeClass(item.model_prediction);
    badge.textContent = formatProbability(item.probability);
    prob.appendChild(badge);

    const study = document.createElement("td");
    const link = document.createElement("button");
    link.type = "button";
    link.className = "study-link";
    link.textContent = item.study_id;
    link.addEventListener("click", () => this.opts.onOpenStudy(item.study_id));
    study.appendChild(link);

    const part = document.createElement("td");
    part.textContent = item.body_part;

    const views = document.createElement("td");
    views.textContent = String(item.image_count);

    const status = document.createElement("td");
    const chip = document.createElement("span");
    chip.className = statusChipClass(item.status);
    chip.textContent = item.status;
    status.appendChild(chip);

    const scored = document.createElement("td");
    scored.className = "scored-at";
    scored.textContent = item.scored_at ?? "—";

    tr.append(prob, study, part, views, status, scored);
    return tr;
  }
}
