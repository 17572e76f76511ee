// The controller must survive out-of-order preview responses: a slow old
// request resolving after a newer one may not clobber the newer overlay.

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { PreviewController } from "../src/controller.js";
import type { PreviewResult } from "../src/api.js";

function result(areaPx: number): PreviewResult {
  return {
    area_px: areaPx,
    area_mm2: areaPx * 0.01,
    mask_rle_central: { rows: 1, cols: 1, runs: [1] },
  };
}

interface Deferred {
  t: number;
  resolve(r: PreviewResult): void;
  reject(err: unknown): void;
}

function harness(delayMs = 100) {
  const pending: Deferred[] = [];
  const applied: Array<{ t: number; area: number }> = [];
  const errors: number[] = [];
  const controller = new PreviewController(
    (t) =>
      new Promise<PreviewResult>((resolve, reject) => {
        pending.push({ t, resolve, reject });
      }),
    {
      apply: (t, r) => applied.push({ t, area: r.area_px }),
      error: (t) => errors.push(t),
    },
    delayMs,
  );
  return { pending, applied, errors, controller };
}

async function settle(): Promise<void> {
  // let promise callbacks run
  await Promise.resolve();
  await Promise.resolve();
}

describe("PreviewController", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("debounces scrubs into one request", async () => {
    const h = harness();
    h.controller.scrub(0.1);
    h.controller.scrub(0.2);
    h.controller.scrub(0.3);
    expect(h.pending.length).toBe(0);
    vi.advanceTimersByTime(100);
    expect(h.pending.map((p) => p.t)).toEqual([0.3]);
    h.pending[0]?.resolve(result(30));
    await settle();
    expect(h.applied).toEqual([{ t: 0.3, area: 30 }]);
  });

  it("drops a stale response that lands after a newer one", async () => {
    const h = harness();
    const p1 = h.controller.request(0.1);
    const p2 = h.controller.request(0.2);
    expect(h.pending.map((p) => p.t)).toEqual([0.1, 0.2]);
    h.pending[1]?.resolve(result(20)); // newer answers first
    await settle();
    h.pending[0]?.resolve(result(10)); // older limps in late
    await settle();
    await Promise.all([p1, p2]);
    expect(h.applied).toEqual([{ t: 0.2, area: 20 }]);
  });

  it("applies in-order responses normally", async () => {
    const h = harness();
    const p1 = h.controller.request(0.1);
    h.pending[0]?.resolve(result(10));
    await settle();
    const p2 = h.controller.request(0.2);
    h.pending[1]?.resolve(result(20));
    await settle();
    await Promise.all([p1, p2]);
    expect(h.applied).toEqual([
      { t: 0.1, area: 10 },
      { t: 0.2, area: 20 },
    ]);
  });

  it("a stale failure stays silent once a newer response applied", async () => {
    const h = harness();
    const p1 = h.controller.request(0.1);
    const p2 = h.controller.request(0.2);
    h.pending[1]?.resolve(result(20));
    await settle();
    h.pending[0]?.reject(new Error("slow request lost the race"));
    await settle();
    await Promise.all([p1, p2]);
    expect(h.applied).toEqual([{ t: 0.2, area: 20 }]);
    expect(h.errors).toEqual([]);
  });

  it("a current failure does reach the sink", async () => {
    const h = harness();
    const p = h.controller.request(0.4);
    h.pending[0]?.reject(new Error("boom"));
    await settle();
    await p;
    expect(h.errors).toEqual([0.4]);
  });

  it("cancel invalidates everything in flight", async () => {
    const h = harness();
    const p = h.controller.request(0.1);
    h.controller.cancel();
    h.pending[0]?.resolve(result(10));
    await settle();
    await p;
    expect(h.applied).toEqual([]);
  });

  it("cancel also drops a pending debounced scrub", () => {
    const h = harness();
    h.controller.scrub(0.5);
    h.controller.cancel();
    vi.advanceTimersByTime(500);
    expect(h.pending.length).toBe(0);
  });
});
