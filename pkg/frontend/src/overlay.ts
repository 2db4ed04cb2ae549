/**
 * Pure pixel and geometry helpers behind the viewer canvas. Everything
 * here works on plain buffers so it can be unit-tested without a DOM.
 */

import type { Raster } from "./pgm.js";

export interface RgbaBuffer {
  width: number;
  height: number;
  /** RGBA, 4 bytes per pixel, row-major. */
  data: Uint8ClampedArray;
}

export interface Seed {
  row: number;
  col: number;
  halfSize: number;
}

/** The seed box must stay this many pixels inside the frame. */
export const SEED_CLEARANCE_PX = 2;

export function rasterToRgba(img: Raster): RgbaBuffer {
  const out = new Uint8ClampedArray(img.width * img.height * 4);
  const n = img.width * img.height;
  for (let i = 0; i < n; i++) {
    const src = i * img.channels;
    out[i * 4] = img.pixels[src];
    out[i * 4 + 1] = img.pixels[img.channels === 3 ? src + 1 : src];
    out[i * 4 + 2] = img.pixels[img.channels === 3 ? src + 2 : src];
    out[i * 4 + 3] = 255;
  }
  return { width: img.width, height: img.height, data: out };
}

export interface Tint {
  r: number;
  g: number;
  b: number;
  /** 0..1 blend strength where the mask is set. */
  alpha: number;
}

export const MASK_TINT: Tint = { r: 64, g: 200, b: 255, alpha: 0.45 };

/**
 * Blend a tint into `base` wherever the grayscale `mask` is nonzero.
 * Returns a new buffer; the inputs are untouched.
 */
export function tintMask(base: RgbaBuffer, mask: Raster, tint: Tint): RgbaBuffer {
  if (mask.width !== base.width || mask.height !== base.height) {
    throw new Error(
      `mask is ${mask.width}x${mask.height}, image is ${base.width}x${base.height}`);
  }
  const out = new Uint8ClampedArray(base.data);
  const n = base.width * base.height;
  for (let i = 0; i < n; i++) {
    if (mask.pixels[i * mask.channels] === 0) continue;
    out[i * 4] = out[i * 4] * (1 - tint.alpha) + tint.r * tint.alpha;
    out[i * 4 + 1] = out[i * 4 + 1] * (1 - tint.alpha) + tint.g * tint.alpha;
    out[i * 4 + 2] = out[i * 4 + 2] * (1 - tint.alpha) + tint.b * tint.alpha;
  }
  return { width: base.width, height: base.height, data: out };
}

/** Inclusive pixel bounds of the seed box. */
export function seedBounds(seed: Seed): { r0: number; r1: number; c0: number; c1: number } {
  return {
    r0: seed.row - seed.halfSize,
    r1: seed.row + seed.halfSize,
    c0: seed.col - seed.halfSize,
    c1: seed.col + seed.halfSize,
  };
}

/**
 * Clamp a seed center so its box keeps the service's clearance from the
 * frame border. The service refuses anything closer, so clamping during
 * a drag means every submitted seed is valid by construction.
 */
export function clampSeed(seed: Seed, size: number,
                          clearance = SEED_CLEARANCE_PX): Seed {
  const lo = clearance + seed.halfSize;
  const hi = size - 1 - clearance - seed.halfSize;
  if (lo > hi) {
    throw new Error(`seed half-size ${seed.halfSize} cannot fit a ${size} px frame`);
  }
  const clip = (v: number) => Math.min(hi, Math.max(lo, Math.round(v)));
  return { row: clip(seed.row), col: clip(seed.col), halfSize: seed.halfSize };
}

/**
 * Map a pointer position on the displayed canvas back to image pixels.
 * The canvas may be CSS-scaled, so use its bounding box, not its
 * intrinsic size.
 */
export function pointerToPixel(
  clientX: number, clientY: number,
  rect: { left: number; top: number; width: number; height: number },
  imageWidth: number, imageHeight: number,
): { row: number; col: number } {
  const col = ((clientX - rect.left) / rect.width) * imageWidth;
  const row = ((clientY - rect.top) / rect.height) * imageHeight;
  return { row: Math.floor(row), col: Math.floor(col) };
}

/** Default seed used when the operator has not placed one: frame center. */
export function defaultSeed(size: number, halfSize: number): Seed {
  return { row: Math.floor(size / 2), col: Math.floor(size / 2), halfSize };
}
