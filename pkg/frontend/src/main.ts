import { ApiClient } from "./api.js";
import { App } from "./app.js";

// Configuration is just the service base URL: ?api=... wins, then the
// api-base <meta> tag, then same-origin (the service mounts this UI at /ui).
function apiBase(): string {
  const params = new URLSearchParams(window.location.search);
  const fromQuery = params.get("api");
  if (fromQuery) return fromQuery;
  const meta = document.querySelector<HTMLMetaElement>('meta[name="api-base"]');
  if (meta?.content) return meta.content;
  return "";
}

const root = document.getElementById("app");
if (root) {
  const api = new ApiClient(apiBase());
  const reviewer = new URLSearchParams(window.location.search).get("reviewer");
  if (reviewer) api.reviewer = reviewer;
  void new App(root, { api }).init();
}
