import { describe, expect, it } from 'vitest';

import { anaglyphPixels, interleavePreviewPixels, previewViewIndex } from '../src/render.js';

function solid(r: number, g: number, b: number, pixels: number): Uint8ClampedArray {
  const out = new Uint8ClampedArray(pixels * 4);
  for (let i = 0; i < pixels; i++) {
    out[i * 4] = r;
    out[i * 4 + 1] = g;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = 255;
  }
  return out;
}

describe('anaglyph mixing', () => {
  it('identical gray eyes stay gray within rounding', () => {
    const gray = solid(120, 120, 120, 4);
    const out = anaglyphPixels(gray, gray);
    for (let i = 0; i < out.length; i += 4) {
      expect(Math.abs(out[i] - 120)).toBeLessThanOrEqual(1);
      expect(out[i + 1]).toBe(out[i + 2]);
    }
  });

  it('black left and white right is pure cyan', () => {
    const out = anaglyphPixels(solid(0, 0, 0, 1), solid(255, 255, 255, 1));
    expect(Array.from(out)).toEqual([0, 255, 255, 255]);
  });

  it('rejects mismatched buffers', () => {
    expect(() => anaglyphPixels(solid(0, 0, 0, 1), solid(0, 0, 0, 2))).toThrow(/differ/);
  });
});

describe('interleaved preview', () => {
  const calib = { pitch: 2.0, tilt: 0, center: 0, nViews: 3 };

  it('walks the view ramp across one lens period', () => {
    // subpixel shift disabled equivalent: sample the green channel (shift 0)
    const got = [0, 1, 2, 3, 4, 5].map((x) => previewViewIndex(calib, x, 0, 1, 6, 1));
    expect(got).toEqual([0, 1, 2, 0, 1, 2]);
  });

  it('sources every subpixel from the mapped view', () => {
    const views = [solid(10, 11, 12, 12), solid(20, 21, 22, 12), solid(30, 31, 32, 12)];
    const out = interleavePreviewPixels(views, 4, 3, calib);
    for (let y = 0; y < 3; y++) {
      for (let x = 0; x < 4; x++) {
        for (let c = 0; c < 3; c++) {
          const k = previewViewIndex(calib, x, y, c, 4, 3);
          expect(out[(y * 4 + x) * 4 + c]).toBe(views[k][c]);
        }
      }
    }
  });

  it('missing views render black', () => {
    const out = interleavePreviewPixels([null, null, null], 2, 2, calib);
    for (let i = 0; i < out.length; i += 4) {
      expect(out[i]).toBe(0);
      expect(out[i + 3]).toBe(255);
    }
  });
});
