/** Console view-model: queue, metrics, connection state, and label flow.
 *
 * The store is the single source the UI renders from; server events and API
 * responses are folded in here so rendering stays a pure function of state.
 */

import { ApiError, type ApiClient } from "./api.js";
import type { ApiEvent, Metrics, QueueItem, TrafficClass } from "./types.js";

export interface Toast {
  kind: "error" | "info";
  text: string;
  at: number;
}

export interface TickPoint {
  at: number;
  accuracy: number | null;
  batchCount: number;
}

export interface ConsoleState {
  items: Map<string, QueueItem>;
  metrics: Metrics | null;
  connected: boolean;
  toasts: Toast[];
  ticks: TickPoint[];
  tickGaps: number[]; // indices into ticks after which a gap was detected
}

type Listener = (state: ConsoleState) => void;

const TICK_GAP_FACTOR = 2.5;
const EXPECTED_TICK_SECONDS = 1.0;

export class ConsoleStore {
  private state: ConsoleState = {
    items: new Map(),
    metrics: null,
    connected: false,
    toasts: [],
    ticks: [],
    tickGaps: [],
  };
  private listeners: Listener[] = [];
  // Items removed optimistically, kept around in case the POST fails.
  private inFlight = new Map<string, QueueItem>();

  constructor(private readonly now: () => number = () => Date.now() / 1000) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  snapshot(): ConsoleState {
    return this.state;
  }

  /** Pending items oldest-first: the analyst works the head of the queue. */
  queueOldestFirst(): QueueItem[] {
    return [...this.state.items.values()].sort((a, b) => a.created_at - b.created_at);
  }

  private publish(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  setConnected(connected: boolean): void {
    if (this.state.connected !== connected) {
      this.state = { ...this.state, connected };
      this.publish();
    }
  }

  /** Replace the whole queue (initial load and reconnect reconciliation). */
  setQueue(items: QueueItem[]): void {
    const map = new Map<string, QueueItem>();
    for (const item of items) {
      if (!this.inFlight.has(item.id)) map.set(item.id, item);
    }
    this.state = { ...this.state, items: map };
    this.publish();
  }

  setMetrics(metrics: Metrics): void {
    this.state = { ...this.state, metrics };
    this.publish();
  }

  applyEvent(event: ApiEvent): void {
    switch (event.kind) {
      case "escalation_created": {
        const item = event.payload as unknown as QueueItem;
        if (!this.inFlight.has(item.id)) {
          const items = new Map(this.state.items);
          items.set(item.id, item);
          this.state = { ...this.state, items };
        }
        break;
      }
      case "escalation_resolved": {
        const id = String(event.payload.id);
        const items = new Map(this.state.items);
        items.delete(id);
        this.inFlight.delete(id);
        this.state = { ...this.state, items };
        break;
      }
      case "metrics_tick": {
        const metrics = event.payload as unknown as Metrics;
        const at = this.now();
        const ticks = [...this.state.ticks];
        const tickGaps = [...this.state.tickGaps];
        const previous = ticks[ticks.length - 1];
        if (previous && at - previous.at > TICK_GAP_FACTOR * EXPECTED_TICK_SECONDS) {
          tickGaps.push(ticks.length - 1); // chart breaks here; never interpolate
        }
        ticks.push({ at, accuracy: metrics.accuracy, batchCount: metrics.batch_accuracy.length });
        this.state = { ...this.state, metrics, ticks, tickGaps };
        break;
      }
    }
    this.publish();
  }

  private toast(kind: Toast["kind"], text: string): void {
    const toasts = [...this.state.toasts, { kind, text, at: this.now() }].slice(-5);
    this.state = { ...this.state, toasts };
    this.publish();
  }

  /**
   * Label an item: optimistic removal, restore on failure.
   *
   * The label argument is forwarded verbatim; a conflict (someone else
   * resolved it) keeps the item removed, any other failure restores it.
   */
  async labelItem(client: ApiClient, id: string, label: TrafficClass): Promise<boolean> {
    const item = this.state.items.get(id);
    if (!item) return false;
    this.inFlight.set(id, item);
    const items = new Map(this.state.items);
    items.delete(id);
    this.state = { ...this.state, items };
    this.publish();
    try {
      await client.submitLabel(id, label);
      this.inFlight.delete(id);
      return true;
    } catch (error) {
      this.inFlight.delete(id);
      if (error instanceof ApiError && error.status === 409) {
        this.toast("info", `${id} was already resolved elsewhere`);
        return false;
      }
      // Restore the item: nothing may vanish without a server resolution.
      const restored = new Map(this.state.items);
      restored.set(id, item);
      this.state = { ...this.state, items: restored };
      const reason = error instanceof ApiError ? error.message : "network unreachable";
      this.toast("error", `label for ${id} failed: ${reason}`);
      return false;
    }
  }
}
