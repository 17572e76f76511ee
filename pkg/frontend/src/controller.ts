// Preview scrubbing with in-flight request bookkeeping.
//
// The slider can fire faster than the network answers, and responses may
// come back out of order. Each request takes a sequence number; a response
// is applied only if no newer response has landed first. Losers are
// silently dropped so the overlay never flickers backwards.

import { debounce } from "./debounce.js";
import type { PreviewResult } from "./api.js";

export type PreviewFetch = (t: number) => Promise<PreviewResult>;

export interface PreviewSink {
  apply(t: number, result: PreviewResult): void;
  error?(t: number, err: unknown): void;
}

export class PreviewController {
  private seq = 0;
  private applied = 0;
  private readonly scrubDebounced: ((t: number) => void) & { cancel(): void };

  constructor(
    private readonly fetchPreview: PreviewFetch,
    private readonly sink: PreviewSink,
    delayMs = 100,
  ) {
    this.scrubDebounced = debounce((t: number) => {
      void this.request(t);
    }, delayMs);
  }

  /** Debounced entry point for slider movement. */
  scrub(t: number): void {
    this.scrubDebounced(t);
  }

  /** Immediate request, still ordered against in-flight scrubs. */
  async request(t: number): Promise<void> {
    const mySeq = ++this.seq;
    try {
      const result = await this.fetchPreview(t);
      if (mySeq > this.applied) {
        this.applied = mySeq;
        this.sink.apply(t, result);
      }
    } catch (err) {
      if (mySeq > this.applied) {
        this.applied = mySeq;
        this.sink.error?.(t, err);
      }
    }
  }

  cancel(): void {
    this.scrubDebounced.cancel();
    // Anything already in flight loses to this marker.
    this.applied = ++this.seq;
  }
}
