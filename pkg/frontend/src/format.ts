/** Display formatting and the evidence view over the feature dictionary. */

// Fixed vector order published by the service: 18 per-packet values followed
// by the 24 window statistics.
export const FEATURE_NAMES = [
  "src_addr",
  "dst_addr",
  "protocol",
  "src_port",
  "dst_port",
  "tcp",
  "udp",
  "ttl",
  "ack",
  "syn",
  "fin",
  "psh",
  "urg",
  "rst",
  "sequence_number",
  "packet_size",
  "acknowledgment_number",
  "payload_size",
  "packet_count",
  "dst_port_entropy",
  "most_freq_src_port",
  "most_freq_dst_port",
  "short_lived_connections",
  "repeated_connection_attempts",
  "scanning_count",
  "flow_rate",
  "source_entropy",
  "rst_count",
  "most_freq_packet_size_freq",
  "abnormal_size_frequency",
  "sequence_number_variance",
  "avg_packet_number",
  "syn_frequency",
  "ack_frequency",
  "tcp_frequency",
  "udp_frequency",
  "most_freq_protocol",
  "packet_size_variance",
  "most_freq_payload_size",
  "avg_payload_size",
  "packet_size_stddev",
  "avg_packet_size",
] as const;

export interface EvidenceFeature {
  name: string;
  value: number;
}

/** Top-K scaled features by absolute value: the analyst's evidence panel. */
export function topFeatures(values: number[], k = 8): EvidenceFeature[] {
  return values
    .map((value, i) => ({ name: FEATURE_NAMES[i] ?? `f${i}`, value }))
    .sort((a, b) => Math.abs(b.value) - Math.abs(a.value) || a.name.localeCompare(b.name))
    .slice(0, k);
}

/** HE rendered exactly as the service reports it: percent at 4 decimals. */
export function formatHePercent(he: number): string {
  return `${(he * 100).toFixed(4)} %`;
}

export function formatConfidence(gamma: number | null): string {
  return gamma === null ? "-" : gamma.toFixed(3);
}

export function formatAge(createdAtSeconds: number, nowMs = Date.now()): string {
  const seconds = Math.max(0, nowMs / 1000 - createdAtSeconds);
  if (seconds < 60) return `${Math.floor(seconds)}s`;
  if (seconds < 3600) return `${Math.floor(seconds / 60)}m ${Math.floor(seconds % 60)}s`;
  return `${Math.floor(seconds / 3600)}h ${Math.floor((seconds % 3600) / 60)}m`;
}

export function formatThroughput(pps: number | null): string {
  if (pps === null) return "-";
  return `${Math.round(pps).toLocaleString("en-US")} pkt/s`;
}

export function classLabelText(cls: string): string {
  const names: Record<string, string> = {
    iot_benign: "IoT benign",
    iot_malicious: "IoT malicious",
    trad_benign: "Trad benign",
    trad_malicious: "Trad malicious",
  };
  return names[cls] ?? cls;
}
