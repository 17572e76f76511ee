// Mask-over-slice compositing. Pure: bytes in, RGBA bytes out, so the
// canvas code in main.ts stays a thin wrapper around putImageData.

export interface OverlayColor {
  r: number;
  g: number;
  b: number;
  a: number; // 0..255, alpha of the tint where the mask is set
}

export const DENSE_TINT: OverlayColor = { r: 255, g: 64, b: 64, a: 120 };

/**
 * Composite a binary mask onto grayscale base pixels.
 *
 * `base` holds one byte per pixel (the PNG the service serves is 8-bit
 * grayscale); `mask` holds 0/1 per pixel. Output is RGBA, straight alpha
 * already applied against the base.
 */
export function compositeOverlay(
  base: Uint8Array,
  mask: Uint8Array,
  color: OverlayColor = DENSE_TINT,
) {
  if (base.length !== mask.length) {
    throw new Error(`base has ${base.length} px but mask has ${mask.length}`);
  }
  const out = new Uint8ClampedArray(base.length * 4);
  const af = color.a / 255;
  for (let i = 0; i < base.length; i++) {
    const g = base[i] ?? 0;
    const o = i * 4;
    if (mask[i]) {
      out[o] = g * (1 - af) + color.r * af;
      out[o + 1] = g * (1 - af) + color.g * af;
      out[o + 2] = g * (1 - af) + color.b * af;
    } else {
      out[o] = g;
      out[o + 1] = g;
      out[o + 2] = g;
    }
    out[o + 3] = 255;
  }
  return out;
}
