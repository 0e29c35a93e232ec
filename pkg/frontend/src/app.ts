import type { ApiClient } from "./api.js";
import { StatsPanel } from "./stats.js";
import { StudyPanel } from "./study.js";
import { WorklistPanel } from "./worklist.js";

export interface AppOptions {
  api: ApiClient;
  pageSize?: number;
}

/**
 * Composition root. Owns the view switch between the worklist and the study
 * viewer and the post-decision plumbing: one decision POST, then the
 * returned row reconciles the worklist in place and the stats panel
 * refreshes. Keyboard navigation walks the current service-given order.
 */
export class App {
  private readonly worklist: WorklistPanel;
  private readonly study: StudyPanel;
  private readonly statsPanel: StatsPanel;
  private readonly worklistEl: HTMLElement;
  private readonly studyEl: HTMLElement;

  constructor(
    root: HTMLElement,
    private readonly opts: AppOptions,
  ) {
    root.innerHTML = `
      <header class="app-head">
        <h1>radtriage worklist</h1>
        <span id="health-line"></span>
      </header>
      <main class="app-main">
        <div class="app-left">
          <section id="worklist-panel"></section>
          <section id="study-panel" hidden></section>
        </div>
        <aside id="stats-panel"></aside>
      </main>
    `;
    this.worklistEl = root.querySelector<HTMLElement>("#worklist-panel")!;
    this.studyEl = root.querySelector<HTMLElement>("#study-panel")!;

    this.worklist = new WorklistPanel(this.worklistEl, {
      api: opts.api,
      pageSize: opts.pageSize,
      onOpenStudy: (studyId) => void this.openStudy(studyId),
    });
    this.study = new StudyPanel(this.studyEl, {
      api: opts.api,
      onDecided: (item) => {
        this.worklist.applyDecisionResult(item);
        void this.statsPanel.refresh();
      },
      onClose: () => this.closeStudy(),
      onNavigate: (delta) => void this.navigate(delta),
    });
    this.statsPanel = new StatsPanel(root.querySelector<HTMLElement>("#stats-panel")!, opts.api);

    const health = root.querySelector<HTMLSpanElement>("#health-line")!;
    opts.api
      .health()
      .then((h) => {
        health.textContent = `model ${h.model_key.slice(0, 12)} · ${h.studies} studies`;
      })
      .catch(() => {
        health.textContent = "service unreachable";
      });
  }

  async init(): Promise<void> {
    await Promise.all([this.worklist.refresh(), this.statsPanel.refresh()]);
  }

  async openStudy(studyId: string): Promise<void> {
    this.worklistEl.hidden = true;
    this.studyEl.hidden = false;
    await this.study.show(studyId);
  }

  private closeStudy(): void {
    this.study.hide();
    this.studyEl.hidden = true;
    this.worklistEl.hidden = false;
  }

  private async navigate(delta: 1 | -1): Promise<void> {
    const order = this.worklist.currentOrder;
    const current = this.study.studyId;
    if (!current || order.length === 0) return;
    const at = order.indexOf(current);
    const next = at < 0 ? 0 : at + delta;
    if (next < 0 || next >= order.length) return;
    await this.study.show(order[next]);
  }
}
