import { ApiError } from "./api.js";
import type { ApiClient } from "./api.js";
import { formatProbability, probBadgeClass, statusChipClass } from "./format.js";
import { decidedStatus } from "./types.js";
import type { StudyDetail, Verdict, WorklistItem } from "./types.js";

export interface StudyOptions {
  api: ApiClient;
  onDecided: (item: WorklistItem) => void;
  onClose: () => void;
  onNavigate: (delta: 1 | -1) => void;
}

/**
 * Single-study viewer: stacked base/overlay radiograph layers, per-view
 * probabilities, and the reviewer decision controls.
 *
 * The overlay layer is the server-rendered CAM PNG shown as-is; the client
 * only toggles its visibility and CSS opacity and never repaints or touches
 * the base image layer. Decisions update the status chip optimistically and
 * reconcile from the service response; a 409 opens a conflict dialog that
 * offers to re-open the study.
 */
export class StudyPanel {
  private detail: StudyDetail | null = null;
  private overlayVisible = true;
  private opacityPct = 100;
  private readonly keyHandler = (event: KeyboardEvent) => this.onKeydown(event);

  constructor(
    private readonly root: HTMLElement,
    private readonly opts: StudyOptions,
  ) {}

  get studyId(): string | null {
    return this.detail?.study_id ?? null;
  }

  async show(studyId: string): Promise<void> {
    document.addEventListener("keydown", this.keyHandler);
    try {
      this.detail = await this.opts.api.study(studyId);
    } catch (err) {
      this.detail = null;
      this.root.innerHTML = `<div class="banner"><span class="banner-text"></span></div>`;
      this.root.querySelector<HTMLSpanElement>(".banner-text")!.textContent =
        err instanceof ApiError && err.status === 404
          ? `Study ${studyId} is not on the worklist.`
          : `Could not load study: ${err instanceof Error ? err.message : String(err)}`;
      return;
    }
    this.render();
  }

  hide(): void {
    document.removeEventListener("keydown", this.keyHandler);
  }

  private onKeydown(event: KeyboardEvent): void {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "TEXTAREA" || target.tagName === "INPUT")) return;
    if (event.key === "n" || event.key === "ArrowRight") {
      event.preventDefault();
      this.opts.onNavigate(1);
    } else if (event.key === "p" || event.key === "ArrowLeft") {
      event.preventDefault();
      this.opts.onNavigate(-1);
    } else if (event.key === "Escape") {
      this.opts.onClose();
    }
  }

  private render(): void {
    const d = this.detail!;
    this.root.innerHTML = `
      <div class="study-head">
        <button type="button" id="study-back">&larr; Worklist</button>
        <h2>${d.study_id}</h2>
        <span class="${probBadgeClass(d.model_prediction)}">${formatProbability(d.probability)}</span>
        <span id="study-status" class="${statusChipClass(d.status)}">${d.status}</span>
        <span class="version">v${d.version}</span>
      </div>
      <div class="viewer-controls">
        <label><input type="checkbox" id="overlay-toggle"> CAM overlay</label>
        <label>Overlay opacity
          <input type="range" id="overlay-opacity" min="0" max="100" step="1">
          <span id="opacity-value"></span>
        </label>
      </div>
      <div class="views" id="study-views"></div>
      <div class="decision-box" id="decision-box"></div>
      <div class="dialog" id="conflict-dialog" hidden>
        <p class="dialog-text"></p>
        <button type="button" id="conflict-reopen">Re-open study</button>
        <button type="button" id="conflict-dismiss">Dismiss</button>
      </div>
      <p class="inline-error" id="study-error" hidden></p>
    `;

    this.root.querySelector<HTMLButtonElement>("#study-back")!.addEventListener("click", () => {
      this.opts.onClose();
    });

    const toggle = this.root.querySelector<HTMLInputElement>("#overlay-toggle")!;
    toggle.checked = this.overlayVisible;
    toggle.addEventListener("change", () => {
      this.overlayVisible = toggle.checked;
      this.applyOverlaySettings();
    });

    const opacity = this.root.querySelector<HTMLInputElement>("#overlay-opacity")!;
    opacity.value = String(this.opacityPct);
    opacity.addEventListener("input", () => {
      this.opacityPct = Number(opacity.value);
      this.applyOverlaySettings();
    });

    this.root.querySelector<HTMLButtonElement>("#conflict-reopen")!.addEventListener("click", () => {
      void this.reopenAfterConflict();
    });
    this.root.querySelector<HTMLButtonElement>("#conflict-dismiss")!.addEventListener("click", () => {
      this.hideConflict();
      void this.reload();
    });

    this.renderViews();
    this.applyOverlaySettings();
    this.renderDecisionBox();
  }

  private renderViews(): void {
    const container = this.root.querySelector<HTMLDivElement>("#study-views")!;
    container.textContent = "";
    for (const image of this.detail!.images) {
      const figure = document.createElement("figure");
      figure.className = "view";
      figure.dataset.index = String(image.index);

      const stack = document.createElement("div");
      stack.className = "image-stack";
      const base = document.createElement("img");
      base.className = "base";
      base.src = this.opts.api.url(image.image_url);
      base.alt = `view ${image.index + 1}`;
      stack.appendChild(base);
      if (!image.error) {
        const overlay = document.createElement("img");
        overlay.className = "overlay";
        overlay.src = this.opts.api.url(image.overlay_url);
        overlay.alt = `view ${image.index + 1} abnormality heatmap`;
        stack.appendChild(overlay);
      }
      figure.appendChild(stack);

      const caption = document.createElement("figcaption");
      caption.textContent = image.error
        ? `view ${image.index + 1} — unreadable (${image.error})`
        : `view ${image.index + 1} · p=${formatProbability(image.probability)}`;
      figure.appendChild(caption);
      container.appendChild(figure);
    }
  }

  /** Visibility and opacity apply to overlay layers only; base imgs stay put. */
  private applyOverlaySettings(): void {
    for (const overlay of this.root.querySelectorAll<HTMLImageElement>("img.overlay")) {
      overlay.hidden = !this.overlayVisible;
      overlay.style.opacity = String(this.opacityPct / 100);
    }
    const label = this.root.querySelector<HTMLSpanElement>("#opacity-value");
    if (label) label.textContent = `${this.opacityPct}%`;
  }

  private renderDecisionBox(): void {
    const d = this.detail!;
    const box = this.root.querySelector<HTMLDivElement>("#decision-box")!;
    if (d.status === "PENDING") {
      box.innerHTML = `
        <textarea id="decision-note" rows="2" maxlength="4000"
          placeholder="Optional note for the audit trail"></textarea>
        <div class="decision-buttons">
          <button type="button" id="decide-abnormal" class="danger">Confirm abnormal</button>
          <button type="button" id="decide-normal">Mark normal</button>
        </div>
      `;
      box.querySelector<HTMLButtonElement>("#decide-abnormal")!.addEventListener("click", () => {
        void this.submitDecision("ABNORMAL");
      });
      box.querySelector<HTMLButtonElement>("#decide-normal")!.addEventListener("click", () => {
        void this.submitDecision("NORMAL");
      });
    } else {
      const record = d.decision;
      const parts = [`<p class="decision-summary">Decided: <strong>${d.status}</strong></p>`];
      if (record) {
        parts.push(`<p class="decision-meta"></p>`);
        if (record.note) parts.push(`<p class="decision-note"></p>`);
      }
      parts.push(`<button type="button" id="study-reopen">Re-open</button>`);
      box.innerHTML = parts.join("\n");
      if (record) {
        const who = record.reviewer ? ` by ${record.reviewer}` : "";
        const when = record.decided_at ? ` at ${record.decided_at}` : "";
        box.querySelector<HTMLParagraphElement>(".decision-meta")!.textContent =
          `${record.verdict}${who}${when}`;
        if (record.note) {
          box.querySelector<HTMLParagraphElement>(".decision-note")!.textContent = record.note;
        }
      }
      box.querySelector<HTMLButtonElement>("#study-reopen")!.addEventListener("click", () => {
        void this.reopenStudy();
      });
    }
  }

  private async submitDecision(verdict: Verdict): Promise<void> {
    const d = this.detail!;
    const note = this.root.querySelector<HTMLTextAreaElement>("#decision-note")?.value ?? "";
    const rollback = d.status;
    // optimistic: flip the chip right away, the response settles it
    this.setStatusChip(decidedStatus(verdict, d.model_prediction), true);
    this.setDecisionButtonsDisabled(true);
    this.hideError();
    try {
      const item = await this.opts.api.decide(d.study_id, verdict, note);
      d.status = item.status;
      d.version = item.version;
      d.decision = { verdict, note, reviewer: this.opts.api.reviewer, decided_at: "" };
      this.setStatusChip(item.status, false);
      this.setVersion(item.version);
      this.renderDecisionBox();
      this.opts.onDecided(item);
    } catch (err) {
      this.setStatusChip(rollback, false);
      this.setDecisionButtonsDisabled(false);
      if (err instanceof ApiError && err.status === 409) {
        this.showConflict(err.detail);
      } else {
        this.showError(`Decision failed: ${err instanceof Error ? err.message : String(err)}`);
      }
    }
  }

  private async reopenStudy(): Promise<void> {
    const d = this.detail!;
    this.hideError();
    try {
      const item = await this.opts.api.reopen(d.study_id);
      d.status = item.status;
      d.version = item.version;
      d.decision = null;
      this.setStatusChip(item.status, false);
      this.setVersion(item.version);
      this.renderDecisionBox();
      this.opts.onDecided(item);
    } catch (err) {
      this.showError(`Re-open failed: ${err instanceof Error ? err.message : String(err)}`);
      void this.reload();
    }
  }

  /** From the conflict dialog: re-open, then reload the authoritative state. */
  private async reopenAfterConflict(): Promise<void> {
    const d = this.detail!;
    this.hideConflict();
    try {
      const item = await this.opts.api.reopen(d.study_id);
      this.opts.onDecided(item);
    } catch (err) {
      this.showError(`Re-open failed: ${err instanceof Error ? err.message : String(err)}`);
    }
    await this.reload();
  }

  async reload(): Promise<void> {
    if (this.detail) await this.show(this.detail.study_id);
  }

  private setStatusChip(status: string, provisional: boolean): void {
    const chip = this.root.querySelector<HTMLSpanElement>("#study-status");
    if (!chip) return;
    chip.className = statusChipClass(status as StudyDetail["status"]);
    if (provisional) chip.classList.add("saving");
    chip.textContent = status;
  }

  private setVersion(version: number): void {
    const el = this.root.querySelector<HTMLSpanElement>(".version");
    if (el) el.textContent = `v${version}`;
  }

  private setDecisionButtonsDisabled(disabled: boolean): void {
    for (const button of this.root.querySelectorAll<HTMLButtonElement>(".decision-buttons button")) {
      button.disabled = disabled;
    }
  }

  private showConflict(detail: string): void {
    const dialog = this.root.querySelector<HTMLDivElement>("#conflict-dialog")!;
    dialog.querySelector<HTMLParagraphElement>(".dialog-text")!.textContent =
      `The service rejected this decision: ${detail}`;
    dialog.hidden = false;
  }

  private hideConflict(): void {
    const dialog = this.root.querySelector<HTMLDivElement>("#conflict-dialog");
    if (dialog) dialog.hidden = true;
  }

  private showError(message: string): void {
    const el = this.root.querySelector<HTMLParagraphElement>("#study-error")!;
    el.textContent = message;
    el.hidden = false;
  }

  private hideError(): void {
    const el = this.root.querySelector<HTMLParagraphElement>("#study-error");
    if (el) el.hidden = true;
  }
}
