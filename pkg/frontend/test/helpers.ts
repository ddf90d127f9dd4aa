import type { Metrics, QueueItem } from "../src/types.js";

export function makeItem(overrides: Partial<QueueItem> = {}): QueueItem {
  return {
    id: "esc-00000001",
    five_tuple: "10.0.0.1:5000->10.0.0.2:80/6",
    timestamp: 1.5,
    packet_size: 60,
    payload_size: 0,
    gamma1: 0.41,
    gamma2: 0.55,
    m1_label: "iot_benign",
    m2_label: "iot_malicious",
    status: "pending_human",
    created_at: 1000.0,
    final_label: null,
    label_provenance: null,
    features: Array.from({ length: 42 }, (_, i) => (i % 7) / 10),
    ...overrides,
  };
}

export function makeMetrics(overrides: Partial<Metrics> = {}): Metrics {
  return {
    m1_trp: 115795,
    m1_cpp: 115789,
    m2_trp: 6,
    m2_cpp: 3,
    hir: 3,
    he: 3 / 115795,
    he_percent: (3 / 115795) * 100,
    accuracy: 0.999,
    throughput: 66130,
    batch_accuracy: [0.91, 0.95, 0.99],
    retrain_events: 6,
    provenance_counts: { m1: 115789, m2: 3, human: 3 },
    ...overrides,
  };
}

type FetchCall = { url: string; init?: RequestInit };

export function fakeFetch(
  handler: (url: string, init?: RequestInit) => { status: number; body: unknown },
): { fetchFn: typeof fetch; calls: FetchCall[] } {
  const calls: FetchCall[] = [];
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    calls.push({ url, init });
    const { status, body } = handler(url, init);
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  }) as typeof fetch;
  return { fetchFn, calls };
}
