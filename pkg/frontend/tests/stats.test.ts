import { afterEach, beforeEach, describe, expect, test, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { StatsPanel } from "../src/stats.js";
import { MockService } from "./mock-service.js";

describe("stats panel", () => {
  let mock: MockService;
  let api: ApiClient;
  let root: HTMLElement;

  beforeEach(() => {
    mock = new MockService();
    mock.install();
    api = new ApiClient(mock.base);
    document.body.innerHTML = '<div id="root"></div>';
    root = document.getElementById("root")!;
  });

  afterEach(() => {
    vi.unstubAllGlobals();
  });

  test("a fresh store renders zero counts and no agreement", async () => {
    const panel = new StatsPanel(root, api);
    await panel.refresh();

    expect(root.querySelector("#stats-summary")!.textContent).toBe("0 studies on the worklist");
    expect(root.querySelector("#stats-agreement")!.textContent).toBe("Agreement — · 0 decided");
    const statusCounts = [...root.querySelectorAll("#stats-by-status li")].map(
      (li) => li.textContent,
    );
    expect(statusCounts).toEqual([
      "PENDING: 0",
      "CONFIRMED_ABNORMAL: 0",
      "OVERRIDDEN_NORMAL: 0",
      "CONFIRMED_NORMAL: 0",
      "OVERRIDDEN_ABNORMAL: 0",
    ]);
  });

  test("two confirms and one override display the service's 2/3 agreement", async () => {
    mock.seed({ study_id: "XR_WRIST/patient10001/study1", probability: 0.9 });
    mock.seed({ study_id: "XR_WRIST/patient10002/study1", probability: 0.8 });
    mock.seed({ study_id: "XR_HAND/patient10003/study1", probability: 0.7 });
    mock.seed({ study_id: "XR_HAND/patient10004/study1", probability: 0.1 });
    await api.decide("XR_WRIST/patient10001/study1", "ABNORMAL"); // confirm
    await api.decide("XR_WRIST/patient10002/study1", "ABNORMAL"); // confirm
    await api.decide("XR_HAND/patient10003/study1", "NORMAL"); // override

    const panel = new StatsPanel(root, api);
    await panel.refresh();

    expect(root.querySelector("#stats-agreement")!.textContent).toBe("Agreement 67% · 3 decided");
    expect(root.querySelector('[data-status="CONFIRMED_ABNORMAL"]')!.textContent).toBe(
      "CONFIRMED_ABNORMAL: 2",
    );
    expect(root.querySelector('[data-status="OVERRIDDEN_NORMAL"]')!.textContent).toBe(
      "OVERRIDDEN_NORMAL: 1",
    );
    expect(root.querySelector('[data-status="PENDING"]')!.textContent).toBe("PENDING: 1");
    const parts = [...root.querySelectorAll("#stats-by-part li")].map((li) => li.textContent);
    expect(parts).toEqual(["WRIST: 2", "HAND: 2"]);
  });

  test("a failed refresh keeps the last numbers behind a stale flag", async () => {
    mock.seed({ study_id: "XR_WRIST/patient10001/study1", probability: 0.9 });
    const panel = new StatsPanel(root, api);
    await panel.refresh();
    expect(root.querySelector("#stats-summary")!.textContent).toBe("1 studies on the worklist");

    mock.failNextRequests = 1;
    await panel.refresh();
    expect(root.classList.contains("stale")).toBe(true);
    expect(root.querySelector<HTMLSpanElement>("#stats-stale")!.hidden).toBe(false);
    // previous numbers are still on screen, just flagged
    expect(root.querySelector("#stats-summary")!.textContent).toBe("1 studies on the worklist");

    mock.seed({ study_id: "XR_HAND/patient10002/study1", probability: 0.2 });
    await panel.refresh();
    expect(root.classList.contains("stale")).toBe(false);
    expect(root.querySelector<HTMLSpanElement>("#stats-stale")!.hidden).toBe(true);
    expect(root.querySelector("#stats-summary")!.textContent).toBe("2 studies on the worklist");
  });
});
