/** Console bootstrap: wire the API client, store, and renderers together. */

import { ApiClient } from "./api.js";
import { ConsoleStore } from "./store.js";
import type { TrafficClass } from "./types.js";
import { renderBanner, renderMetrics, renderQueue, renderToasts } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "http://127.0.0.1:8787";
const token = params.get("token") ?? "";

const client = new ApiClient(baseUrl, token);
const store = new ConsoleStore();

const bannerEl = document.getElementById("banner")!;
const queueEl = document.getElementById("queue")!;
const metricsEl = document.getElementById("metrics")!;
const toastsEl = document.getElementById("toasts")!;

const actions = {
  onLabel(id: string, label: TrafficClass) {
    void store.labelItem(client, id, label);
  },
};

store.subscribe((state) => {
  renderBanner(bannerEl, state);
  renderQueue(queueEl, state, actions);
  renderMetrics(metricsEl, state);
  renderToasts(toastsEl, state);
});

async function refreshQueue(): Promise<void> {
  try {
    store.setQueue(await client.fetchQueue());
  } catch {
    // the event stream status banner already reports connectivity
  }
}

client.openEvents({
  onEvent: (event) => store.applyEvent(event),
  onStatus: (connected) => {
    store.setConnected(connected);
    // Reconcile after every (re)connect: push events resume from "now".
    if (connected) void refreshQueue();
  },
});

void refreshQueue();
void client.fetchMetrics().then((m) => store.setMetrics(m)).catch(() => undefined);

// Ages tick locally between events.
setInterval(() => {
  for (const el of document.querySelectorAll<HTMLElement>(".age[data-created]")) {
    const created = Number(el.dataset.created);
    if (Number.isFinite(created)) {
      el.textContent = `${Math.max(0, Math.floor(Date.now() / 1000 - created))}s`;
    }
  }
}, 1000);
