import type {
  HealthResponse,
  SortMode,
  StatsResponse,
  Status,
  StudyDetail,
  Verdict,
  WorklistItem,
  WorklistPage,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export interface WorklistQuery {
  status?: Status | "";
  bodyPart?: string;
  sort?: SortMode;
  page?: number;
  pageSize?: number;
}

/**
 * Thin typed client for the worklist service. The only configuration is the
 * service base URL; an optional reviewer name is forwarded on decisions via
 * the X-Reviewer header.
 *
 * Reads may run concurrently, but decision/re-open posts are serialized per
 * study so two rapid clicks can never race each other on the wire.
 */
export class ApiClient {
  private readonly baseUrl: string;
  private readonly writeQueues = new Map<string, Promise<unknown>>();

  constructor(
    baseUrl: string,
    public reviewer = "",
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  url(path: string): string {
    return this.baseUrl + path;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(this.url(path), init);
    } catch (err) {
      throw new ApiError(0, err instanceof Error ? err.message : "service unreachable");
    }
    if (!resp.ok) {
      let detail = resp.statusText || `status ${resp.status}`;
      try {
        const body: unknown = await resp.json();
        if (body && typeof body === "object" && "detail" in body) {
          detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
        }
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<HealthResponse> {
    return this.request("/health");
  }

  worklist(query: WorklistQuery = {}): Promise<WorklistPage> {
    const params = new URLSearchParams();
    if (query.status) params.set("status", query.status);
    if (query.bodyPart) params.set("body_part", query.bodyPart);
    if (query.sort) params.set("sort", query.sort);
    if (query.page !== undefined) params.set("page", String(query.page));
    if (query.pageSize !== undefined) params.set("page_size", String(query.pageSize));
    const qs = params.toString();
    return this.request(qs ? `/worklist?${qs}` : "/worklist");
  }

  study(studyId: string): Promise<StudyDetail> {
    return this.request(`/studies/${studyId}`);
  }

  stats(): Promise<StatsResponse> {
    return this.request("/stats");
  }

  decide(studyId: string, verdict: Verdict, note = ""): Promise<WorklistItem> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.reviewer) headers["X-Reviewer"] = this.reviewer;
    return this.enqueueWrite(studyId, () =>
      this.request(`/studies/${studyId}/decision`, {
        method: "POST",
        headers,
        body: JSON.stringify({ verdict, note }),
      }),
    );
  }

  reopen(studyId: string): Promise<WorklistItem> {
    return this.enqueueWrite(studyId, () =>
      this.request(`/studies/${studyId}/reopen`, { method: "POST" }),
    );
  }

  /** Chain a write after any in-flight write for the same study. */
  private enqueueWrite<T>(studyId: string, task: () => Promise<T>): Promise<T> {
    const prev = this.writeQueues.get(studyId) ?? Promise.resolve();
    const next = prev.then(task, task);
    this.writeQueues.set(
      studyId,
      next.catch(() => undefined),
    );
    return next;
  }
}
