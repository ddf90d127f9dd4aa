/** Wire types mirroring the service's published JSON schemas. */

export const TRAFFIC_CLASSES = [
  "iot_benign",
  "iot_malicious",
  "trad_benign",
  "trad_malicious",
] as const;

export type TrafficClass = (typeof TRAFFIC_CLASSES)[number];

export interface QueueItem {
  id: string;
  five_tuple: string;
  timestamp: number;
  packet_size: number;
  payload_size: number;
  gamma1: number;
  gamma2: number | null;
  m1_label: TrafficClass;
  m2_label: TrafficClass | null;
  status: "pending_m2" | "pending_human" | "resolved";
  created_at: number;
  final_label: TrafficClass | null;
  label_provenance: "m1" | "m2" | "human" | null;
  features: number[];
}

export interface Metrics {
  m1_trp: number;
  m1_cpp: number;
  m2_trp: number;
  m2_cpp: number;
  hir: number;
  he: number;
  he_percent: number;
  accuracy: number | null;
  throughput: number | null;
  batch_accuracy: number[];
  retrain_events: number;
  provenance_counts: Record<string, number>;
}

export interface ApiEvent {
  kind: "escalation_created" | "escalation_resolved" | "metrics_tick";
  payload: Record<string, unknown>;
}

export interface ResolvedPayload {
  id: string;
  label: TrafficClass;
  provenance: "m2" | "human";
}

export function isTrafficClass(value: string): value is TrafficClass {
  return (TRAFFIC_CLASSES as readonly string[]).includes(value);
}
