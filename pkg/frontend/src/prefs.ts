import type { SortMode, Status } from "./types.js";

// Filter preferences are the one thing that survives a reload; every other
// piece of state is refetched from the service.

export interface FilterPrefs {
  status: Status | "";
  bodyPart: string;
  sort: SortMode;
}

export const DEFAULT_PREFS: FilterPrefs = { status: "", bodyPart: "", sort: "prob_desc" };

const STORAGE_KEY = "radtriage.worklist.filters";

export function loadFilterPrefs(): FilterPrefs {
  try {
    const raw = window.localStorage.getItem(STORAGE_KEY);
    if (!raw) return { ...DEFAULT_PREFS };
    const parsed = JSON.parse(raw) as Partial<FilterPrefs>;
    return {
      status: parsed.status ?? DEFAULT_PREFS.status,
      bodyPart: typeof parsed.bodyPart === "string" ? parsed.bodyPart : DEFAULT_PREFS.bodyPart,
      sort: parsed.sort ?? DEFAULT_PREFS.sort,
    };
  } catch {
    return { ...DEFAULT_PREFS };
  }
}

export function saveFilterPrefs(prefs: FilterPrefs): void {
  try {
    window.localStorage.setItem(STORAGE_KEY, JSON.stringify(prefs));
  } catch {
    // storage may be unavailable (private mode); filters just reset on reload
  }
}
