/** DOM rendering: everything derives from the store snapshot. */

import {
  classLabelText,
  formatAge,
  formatConfidence,
  formatHePercent,
  formatThroughput,
  topFeatures,
} from "./format.js";
import type { ConsoleState } from "./store.js";
import type { QueueItem, TrafficClass } from "./types.js";
import { TRAFFIC_CLASSES } from "./types.js";

export interface UiActions {
  onLabel(id: string, label: TrafficClass): void;
}

export function renderBanner(root: HTMLElement, state: ConsoleState): void {
  root.innerHTML = state.connected
    ? ""
    : '<div class="banner">connection lost - retrying…</div>';
}

export function renderQueue(root: HTMLElement, state: ConsoleState, actions: UiActions): void {
  const items = [...state.items.values()].sort((a, b) => a.created_at - b.created_at);
  if (items.length === 0) {
    root.innerHTML = '<div class="empty">No pending escalations.</div>';
    return;
  }
  root.innerHTML = "";
  for (const item of items) {
    root.appendChild(queueCard(item, actions));
  }
}

function queueCard(item: QueueItem, actions: UiActions): HTMLElement {
  const card = document.createElement("div");
  card.className = "card";
  card.dataset.id = item.id;

  const header = document.createElement("div");
  header.className = "card-header";
  header.innerHTML =
    `<span class="mono">${escapeHtml(item.five_tuple)}</span>` +
    `<span class="age" data-created="${item.created_at}">${formatAge(item.created_at)}</span>`;
  card.appendChild(header);

  const verdicts = document.createElement("div");
  verdicts.className = "verdicts";
  verdicts.innerHTML =
    `<span>M1: ${classLabelText(item.m1_label)} (γ₁ ${formatConfidence(item.gamma1)})</span>` +
    `<span>M2: ${item.m2_label ? classLabelText(item.m2_label) : "-"} (γ₂ ${formatConfidence(item.gamma2)})</span>`;
  card.appendChild(verdicts);

  const evidence = document.createElement("table");
  evidence.className = "evidence";
  for (const feature of topFeatures(item.features)) {
    const row = evidence.insertRow();
    row.insertCell().textContent = feature.name;
    row.insertCell().textContent = feature.value.toFixed(4);
  }
  card.appendChild(evidence);

  const buttons = document.createElement("div");
  buttons.className = "labels";
  for (const cls of TRAFFIC_CLASSES) {
    const button = document.createElement("button");
    button.textContent = classLabelText(cls);
    button.dataset.label = cls;
    // The label sent is exactly the button's class, nothing else.
    button.addEventListener("click", () => actions.onLabel(item.id, cls));
    buttons.appendChild(button);
  }
  card.appendChild(buttons);
  return card;
}

export function renderMetrics(root: HTMLElement, state: ConsoleState): void {
  const m = state.metrics;
  if (!m) {
    root.innerHTML = '<div class="empty">Waiting for metrics…</div>';
    return;
  }
  root.innerHTML = `
    <div class="counters">
      <div><label>M1 TRP</label><b>${m.m1_trp.toLocaleString("en-US")}</b></div>
      <div><label>M1 CPP</label><b>${m.m1_cpp.toLocaleString("en-US")}</b></div>
      <div><label>M2 TRP</label><b>${m.m2_trp.toLocaleString("en-US")}</b></div>
      <div><label>M2 CPP</label><b>${m.m2_cpp.toLocaleString("en-US")}</b></div>
      <div><label>HIR</label><b id="hir">${m.hir.toLocaleString("en-US")}</b></div>
      <div><label>HE</label><b id="he">${formatHePercent(m.he)}</b></div>
      <div><label>Accuracy</label><b>${m.accuracy === null ? "-" : m.accuracy.toFixed(4)}</b></div>
      <div><label>Throughput</label><b>${formatThroughput(m.throughput)}</b></div>
    </div>
    ${renderAccuracyChart(m.batch_accuracy)}
  `;
}

/** Per-batch accuracy polyline; points only, no interpolation of gaps. */
export function renderAccuracyChart(series: number[], width = 560, height = 120): string {
  if (series.length === 0) {
    return '<div class="empty">No batches yet.</div>';
  }
  const step = series.length > 1 ? width / (series.length - 1) : 0;
  const points = series
    .map((v, i) => `${(i * step).toFixed(1)},${((1 - v) * (height - 10) + 5).toFixed(1)}`)
    .join(" ");
  const shape =
    series.length === 1
      ? `<circle cx="0" cy="${((1 - series[0]) * (height - 10) + 5).toFixed(1)}" r="3" class="pt"/>`
      : `<polyline points="${points}" fill="none" class="line"/>`;
  return `<svg class="chart" viewBox="0 0 ${width} ${height}" data-points="${series.length}">
    <line x1="0" y1="5" x2="${width}" y2="5" class="grid"/>
    <line x1="0" y1="${height - 5}" x2="${width}" y2="${height - 5}" class="grid"/>
    ${shape}
  </svg>`;
}

export function renderToasts(root: HTMLElement, state: ConsoleState): void {
  root.innerHTML = state.toasts
    .slice(-3)
    .map((t) => `<div class="toast ${t.kind}">${escapeHtml(t.text)}</div>`)
    .join("");
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}
