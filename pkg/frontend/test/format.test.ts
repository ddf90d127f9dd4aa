import { describe, expect, it } from "vitest";

import { FEATURE_NAMES, formatAge, formatHePercent, topFeatures } from "../src/format.js";

describe("formatHePercent", () => {
  it("renders the published workload numbers exactly", () => {
    expect(formatHePercent(3 / 115795)).toBe("0.0026 %");
    expect(formatHePercent(109 / 111644)).toBe("0.0976 %");
    expect(formatHePercent(0)).toBe("0.0000 %");
  });

  it("matches the server-side he_percent within display precision", () => {
    const he = 3 / 115795;
    const serverPercent = he * 100;
    expect(formatHePercent(he)).toBe(`${serverPercent.toFixed(4)} %`);
  });
});

describe("topFeatures", () => {
  it("returns the K largest magnitudes with dictionary names", () => {
    const values = new Array(42).fill(0);
    values[0] = 0.2; // src_addr
    values[18] = -0.9; // packet_count
    values[41] = 0.7; // avg_packet_size
    const top = topFeatures(values, 3);
    expect(top.map((f) => f.name)).toEqual(["packet_count", "avg_packet_size", "src_addr"]);
  });

  it("defaults to 8 entries", () => {
    const values = Array.from({ length: 42 }, (_, i) => i / 42);
    expect(topFeatures(values)).toHaveLength(8);
  });

  it("covers the full 42-name dictionary", () => {
    expect(FEATURE_NAMES).toHaveLength(42);
    expect(new Set(FEATURE_NAMES).size).toBe(42);
  });
});

describe("formatAge", () => {
  it("renders seconds then minutes", () => {
    expect(formatAge(1000, 1005_000)).toBe("5s");
    expect(formatAge(1000, 1125_000)).toBe("2m 5s");
    expect(formatAge(1000, 1000_000 + 7200_000)).toBe("2h 0m");
  });

  it("never shows negative ages", () => {
    expect(formatAge(2000, 1000_000)).toBe("0s");
  });
});
