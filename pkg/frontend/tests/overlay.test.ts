import { describe, expect, it } from "vitest";

import type { Raster } from "../src/pgm.js";
import {
  clampSeed, defaultSeed, pointerToPixel, rasterToRgba, seedBounds,
  tintMask,
} from "../src/overlay.js";

const gray = (width: number, height: number, pixels: number[]): Raster => ({
  width, height, maxval: 255, channels: 1, pixels: Uint8Array.from(pixels),
});

describe("rasterToRgba", () => {
  it("replicates gray samples into opaque rgb", () => {
    const rgba = rasterToRgba(gray(2, 1, [10, 250]));
    expect([...rgba.data]).toEqual([10, 10, 10, 255, 250, 250, 250, 255]);
  });

  it("passes color samples through", () => {
    const img: Raster = { width: 1, height: 1, maxval: 255, channels: 3,
                          pixels: Uint8Array.from([5, 6, 7]) };
    expect([...rasterToRgba(img).data]).toEqual([5, 6, 7, 255]);
  });
});

describe("tintMask", () => {
  it("blends the tint only where the mask is set", () => {
    const base = rasterToRgba(gray(2, 1, [100, 100]));
    const mask = gray(2, 1, [255, 0]);
    const out = tintMask(base, mask, { r: 0, g: 200, b: 0, alpha: 0.5 });
    expect([...out.data.slice(0, 4)]).toEqual([50, 150, 50, 255]);
    expect([...out.data.slice(4)]).toEqual([100, 100, 100, 255]);
    // the input buffer is untouched
    expect([...base.data.slice(0, 4)]).toEqual([100, 100, 100, 255]);
  });

  it("refuses mismatched shapes", () => {
    const base = rasterToRgba(gray(2, 1, [0, 0]));
    expect(() => tintMask(base, gray(1, 1, [0]),
                          { r: 0, g: 0, b: 0, alpha: 1 })).toThrow(/1x1/);
  });
});

describe("seed geometry", () => {
  it("default seed sits at the frame center", () => {
    expect(defaultSeed(256, 2)).toEqual({ row: 128, col: 128, halfSize: 2 });
    expect(seedBounds({ row: 128, col: 128, halfSize: 2 }))
      .toEqual({ r0: 126, r1: 130, c0: 126, c1: 130 });
  });

  it("clamps a dragged seed to the service clearance", () => {
    // clearance 2 + half-size 2 keeps centers within [4, 251] on 256
    expect(clampSeed({ row: 0, col: 300, halfSize: 2 }, 256))
      .toEqual({ row: 4, col: 251, halfSize: 2 });
    expect(clampSeed({ row: 100.6, col: 99.2, halfSize: 2 }, 256))
      .toEqual({ row: 101, col: 99, halfSize: 2 });
  });

  it("rejects a seed box larger than the frame allows", () => {
    expect(() => clampSeed({ row: 10, col: 10, halfSize: 130 }, 256))
      .toThrow(/cannot fit/);
  });
});

describe("pointerToPixel", () => {
  it("maps css-scaled pointer positions onto image pixels", () => {
    const rect = { left: 10, top: 20, width: 512, height: 512 };
    // canvas displayed at 2x: client (10, 20) is pixel (0, 0)
    expect(pointerToPixel(10, 20, rect, 256, 256)).toEqual({ row: 0, col: 0 });
    expect(pointerToPixel(521, 531, rect, 256, 256))
      .toEqual({ row: 255, col: 255 });
    expect(pointerToPixel(266, 276, rect, 256, 256))
      .toEqual({ row: 128, col: 128 });
  });
});
