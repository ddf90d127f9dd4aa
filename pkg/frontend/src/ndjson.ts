/** Incremental splitter for newline-delimited JSON streams. */

export class NdjsonParser {
  private buffer = "";

  /** Feed a chunk; returns every complete JSON object it finished. */
  push(chunk: string): unknown[] {
    this.buffer += chunk;
    const out: unknown[] = [];
    let index: number;
    while ((index = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, index).trim();
      this.buffer = this.buffer.slice(index + 1);
      if (!line) continue;
      try {
        out.push(JSON.parse(line));
      } catch {
        // A malformed line must not poison the rest of the stream.
        console.warn("dropping malformed ndjson line", line.slice(0, 120));
      }
    }
    return out;
  }

  /** Trailing bytes not yet terminated by a newline. */
  pending(): string {
    return this.buffer;
  }
}
