/** Typed client for the detection service's HTTP API. */

import { NdjsonParser } from "./ndjson.js";
import type { ApiEvent, Metrics, QueueItem, TrafficClass } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export interface EventStreamHandle {
  close(): void;
}

export interface EventStreamCallbacks {
  onEvent(event: ApiEvent): void;
  onStatus?(connected: boolean): void;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly authToken = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private headers(json = false): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["content-type"] = "application/json";
    if (this.authToken) headers["authorization"] = `Bearer ${this.authToken}`;
    return headers;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  fetchQueue(): Promise<QueueItem[]> {
    return this.request<QueueItem[]>("/api/queue", { headers: this.headers() });
  }

  fetchMetrics(): Promise<Metrics> {
    return this.request<Metrics>("/api/metrics", { headers: this.headers() });
  }

  /** The body sent is exactly {id, label}: no client-side label rewriting. */
  submitLabel(id: string, label: TrafficClass): Promise<{ status: string; id: string }> {
    return this.request("/api/label", {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify({ id, label }),
    });
  }

  /**
   * Subscribe to the NDJSON event stream with automatic reconnect.
   * Backoff doubles from 0.5 s to 8 s and resets after a healthy read.
   */
  openEvents(callbacks: EventStreamCallbacks): EventStreamHandle {
    let closed = false;
    let backoffMs = 500;

    const connect = async (): Promise<void> => {
      while (!closed) {
        try {
          const response = await this.fetchFn(`${this.baseUrl}/api/events`, {
            headers: this.headers(),
          });
          if (!response.ok || !response.body) {
            throw new ApiError(response.status, "event stream unavailable");
          }
          callbacks.onStatus?.(true);
          backoffMs = 500;
          const reader = response.body.getReader();
          const decoder = new TextDecoder();
          const parser = new NdjsonParser();
          while (!closed) {
            const { done, value } = await reader.read();
            if (done) break;
            for (const parsed of parser.push(decoder.decode(value, { stream: true }))) {
              callbacks.onEvent(parsed as ApiEvent);
            }
          }
        } catch {
          // fall through to retry
        }
        if (closed) return;
        callbacks.onStatus?.(false);
        await new Promise((resolve) => setTimeout(resolve, backoffMs));
        backoffMs = Math.min(backoffMs * 2, 8000);
      }
    };

    void connect();
    return {
      close() {
        closed = true;
      },
    };
  }
}
