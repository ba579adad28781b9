/**
 * Canvas presentation of the tile store, one drawing routine per display
 * mode. The pixel arithmetic (anaglyph mixing, lenticular preview mapping)
 * lives in pure functions over RGBA byte arrays so it can be tested headless.
 */

import type { TileEntry, ViewerState } from './state.js';

/** Luminance-based red/cyan anaglyph of two equally sized RGBA buffers. */
export function anaglyphPixels(
  left: Uint8ClampedArray,
  right: Uint8ClampedArray,
): Uint8ClampedArray<ArrayBuffer> {
  if (left.length !== right.length) throw new Error('eye buffers differ in size');
  const out = new Uint8ClampedArray(left.length);
  for (let i = 0; i < left.length; i += 4) {
    const lumaL = 0.299 * left[i] + 0.587 * left[i + 1] + 0.114 * left[i + 2];
    const lumaR = 0.299 * right[i] + 0.587 * right[i + 1] + 0.114 * right[i + 2];
    out[i] = Math.round(lumaL);
    out[i + 1] = Math.round(lumaR);
    out[i + 2] = Math.round(lumaR);
    out[i + 3] = 255;
  }
  return out;
}

export interface PreviewCalibration {
  pitch: number;
  tilt: number;
  center: number;
  nViews: number;
}

/** Demo lens layout for the interleaved preview (calibration debugging aid). */
export const DEBUG_CALIBRATION: PreviewCalibration = {
  pitch: 24.0,
  tilt: -0.12,
  center: 0.0,
  nViews: 0, // filled from the rig at draw time
};

/** View index emitted at an output subpixel, matching the service formula. */
export function previewViewIndex(
  calib: PreviewCalibration,
  x: number,
  y: number,
  channel: number,
  width: number,
  height: number,
): number {
  const u = (x + 0.5 + (channel - 1) / 3) / width;
  const v = (y + 0.5) / height;
  const phase = (u + v * calib.tilt) * calib.pitch - calib.center;
  const f = phase - Math.floor(phase);
  return Math.min(Math.floor(f * calib.nViews), calib.nViews - 1);
}

/**
 * Interleave per-view RGBA buffers (all tileWidth x tileHeight) into one
 * output buffer of the same size, nearest-sampled. Missing views fall back
 * to black.
 */
export function interleavePreviewPixels(
  views: (Uint8ClampedArray | null)[],
  width: number,
  height: number,
  calib: PreviewCalibration,
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(width * height * 4);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const base = (y * width + x) * 4;
      for (let c = 0; c < 3; c++) {
        const k = previewViewIndex(calib, x, y, c, width, height);
        const view = views[k];
        out[base + c] = view ? view[base + c] : 0;
      }
      out[base + 3] = 255;
    }
  }
  return out;
}

/** Decoded-bitmap cache so each accepted tile is decoded once. */
export class TileBitmaps {
  private cache = new Map<number, { generation: number; bitmap: ImageBitmap }>();

  async get(view: number, entry: TileEntry): Promise<ImageBitmap> {
    const cached = this.cache.get(view);
    if (cached && cached.generation === entry.generation) return cached.bitmap;
    const blob = new Blob([entry.payload.slice().buffer], { type: 'image/png' });
    const bitmap = await createImageBitmap(blob);
    this.cache.get(view)?.bitmap.close();
    this.cache.set(view, { generation: entry.generation, bitmap });
    return bitmap;
  }

  clear(): void {
    for (const { bitmap } of this.cache.values()) bitmap.close();
    this.cache.clear();
  }
}

async function tileImageData(entry: TileEntry): Promise<ImageData> {
  const blob = new Blob([entry.payload.slice().buffer], { type: 'image/png' });
  const bitmap = await createImageBitmap(blob);
  const canvas = new OffscreenCanvas(bitmap.width, bitmap.height);
  const ctx = canvas.getContext('2d')!;
  ctx.drawImage(bitmap, 0, 0);
  bitmap.close();
  return ctx.getImageData(0, 0, bitmap.width, bitmap.height);
}

export class ViewerCanvas {
  private bitmaps = new TileBitmaps();

  constructor(private readonly canvas: HTMLCanvasElement) {}

  reset(): void {
    this.bitmaps.clear();
  }

  async draw(state: ViewerState): Promise<void> {
    const ctx = this.canvas.getContext('2d');
    if (!ctx || state.nViews === 0) return;
    switch (state.displayMode) {
      case 'quilt-grid':
        await this.drawQuiltGrid(ctx, state);
        break;
      case 'single':
        await this.drawSingle(ctx, state);
        break;
      case 'anaglyph':
        await this.drawAnaglyph(ctx, state);
        break;
      case 'side-by-side':
        await this.drawSideBySide(ctx, state);
        break;
      case 'interleaved-preview':
        await this.drawInterleavedPreview(ctx, state);
        break;
    }
    if (state.focusMarker && state.displayMode !== 'quilt-grid') {
      this.drawFocusMarker(ctx);
    }
  }

  private sizeCanvas(width: number, height: number): void {
    if (this.canvas.width !== width) this.canvas.width = width;
    if (this.canvas.height !== height) this.canvas.height = height;
  }

  private async drawQuiltGrid(ctx: CanvasRenderingContext2D, state: ViewerState): Promise<void> {
    const { columns, rows, tileWidth, tileHeight } = state.layout;
    this.sizeCanvas(columns * tileWidth, rows * tileHeight);
    ctx.fillStyle = '#000';
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    for (const [view, entry] of state.displayedTiles()) {
      const bitmap = await this.bitmaps.get(view, entry);
      const col = view % columns;
      const row = Math.floor(view / columns); // rows count from the bottom
      ctx.drawImage(bitmap, col * tileWidth, (rows - 1 - row) * tileHeight);
    }
  }

  private async drawSingle(ctx: CanvasRenderingContext2D, state: ViewerState): Promise<void> {
    const { tileWidth, tileHeight } = state.layout;
    this.sizeCanvas(tileWidth, tileHeight);
    ctx.fillStyle = '#000';
    ctx.fillRect(0, 0, tileWidth, tileHeight);
    const entry = state.tile(state.centerView());
    if (entry) {
      ctx.drawImage(await this.bitmaps.get(state.centerView(), entry), 0, 0);
    }
  }

  private async drawAnaglyph(ctx: CanvasRenderingContext2D, state: ViewerState): Promise<void> {
    const { tileWidth, tileHeight } = state.layout;
    this.sizeCanvas(tileWidth, tileHeight);
    const [li, ri] = state.eyeViews();
    const left = state.tile(li);
    const right = state.tile(ri);
    if (!left || !right) return;
    const [a, b] = await Promise.all([tileImageData(left), tileImageData(right)]);
    const mixed = anaglyphPixels(a.data, b.data);
    ctx.putImageData(new ImageData(mixed, tileWidth, tileHeight), 0, 0);
  }

  private async drawSideBySide(ctx: CanvasRenderingContext2D, state: ViewerState): Promise<void> {
    const { tileWidth, tileHeight } = state.layout;
    this.sizeCanvas(tileWidth, tileHeight);
    const [li, ri] = state.eyeViews();
    const left = state.tile(li);
    const right = state.tile(ri);
    ctx.fillStyle = '#000';
    ctx.fillRect(0, 0, tileWidth, tileHeight);
    // each eye squeezed into one half, as a 3D TV expects
    if (left) {
      ctx.drawImage(await this.bitmaps.get(li, left), 0, 0, tileWidth / 2, tileHeight);
    }
    if (right) {
      ctx.drawImage(await this.bitmaps.get(ri, right), tileWidth / 2, 0, tileWidth / 2, tileHeight);
    }
  }

  private async drawInterleavedPreview(ctx: CanvasRenderingContext2D, state: ViewerState): Promise<void> {
    const { tileWidth, tileHeight } = state.layout;
    this.sizeCanvas(tileWidth, tileHeight);
    const buffers: (Uint8ClampedArray | null)[] = [];
    for (let view = 0; view < state.nViews; view++) {
      const entry = state.tile(view);
      buffers.push(entry ? (await tileImageData(entry)).data : null);
    }
    const calib = { ...DEBUG_CALIBRATION, nViews: state.nViews };
    const mixed = interleavePreviewPixels(buffers, tileWidth, tileHeight, calib);
    ctx.putImageData(new ImageData(mixed, tileWidth, tileHeight), 0, 0);
  }

  private drawFocusMarker(ctx: CanvasRenderingContext2D): void {
    const x = this.canvas.width / 2;
    const y = this.canvas.height / 2;
    const r = Math.min(this.canvas.width, this.canvas.height) * 0.08;
    ctx.strokeStyle = 'rgba(255, 220, 40, 0.9)';
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(x, y, r, 0, 2 * Math.PI);
    ctx.stroke();
  }
}
