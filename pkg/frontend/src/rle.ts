// Run-length decoding for mask slices served by the annotation API.
//
// A slice arrives as alternating run lengths over the row-major flattened
// grid, zeros first. A leading 0 means the slice starts with a set pixel.
// Decoding is the only mask math the browser does; areas and thresholds
// always come from the server.

export function decodeRle(runs: number[], rows: number, cols: number): Uint8Array {
  if (!Number.isInteger(rows) || !Number.isInteger(cols) || rows < 1 || cols < 1) {
    throw new Error(`bad mask shape ${rows}x${cols}`);
  }
  const total = rows * cols;
  const out = new Uint8Array(total);
  let pos = 0;
  for (let i = 0; i < runs.length; i++) {
    const run = runs[i] ?? 0;
    if (!Number.isInteger(run) || run < 0) {
      throw new Error(`bad run length ${run} at index ${i}`);
    }
    if (pos + run > total) {
      throw new Error(`runs sum past ${total} pixels`);
    }
    if (i % 2 === 1) out.fill(1, pos, pos + run);
    pos += run;
  }
  if (pos !== total) {
    throw new Error(`runs cover ${pos} of ${total} pixels`);
  }
  return out;
}

export function countSet(pixels: Uint8Array): number {
  let n = 0;
  for (let i = 0; i < pixels.length; i++) n += pixels[i] ?? 0;
  return n;
}
