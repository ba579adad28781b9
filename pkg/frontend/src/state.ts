/**
 * Client-side session state: camera mirror, received tiles, generation gates.
 *
 * Tiles displace each other per view; a tile is accepted only if its
 * generation clears the floor implied by everything the client has sent and
 * seen, so a stale render can never replace a newer one. Previously accepted
 * tiles stay visible until replaced (the display updates gradually rather
 * than blanking).
 */

import type { SessionAck, FocusResultMessage, ViewFrameHeader } from './protocol.js';

export type ConnectionStatus = 'disconnected' | 'connecting' | 'connected';

export type DisplayMode =
  | 'single'
  | 'anaglyph'
  | 'side-by-side'
  | 'quilt-grid'
  | 'interleaved-preview';

export interface CameraMirror {
  azimuth: number;
  elevation: number;
  distance: number;
  center: [number, number, number];
}

export interface TileEntry {
  generation: number;
  width: number;
  height: number;
  payload: Uint8Array;
}

export interface FocusMarker {
  /** Normalized view coordinates of the marker (always the view center). */
  x: number;
  y: number;
  distance: number;
}

export class ViewerState {
  status: ConnectionStatus = 'disconnected';
  camera: CameraMirror = { azimuth: 0, elevation: 0, distance: 0, center: [0, 0, 0] };
  displayMode: DisplayMode = 'quilt-grid';
  nViews = 0;
  layout = { columns: 0, rows: 0, tileWidth: 0, tileHeight: 0 };
  timepoint = 0;
  focusMarker: FocusMarker | null = null;
  statusMessage = '';
  ack: SessionAck | null = null;

  private tiles = new Map<number, TileEntry>();
  private generationFloor = 0;
  private dirty = true;

  applyAck(ack: SessionAck): void {
    this.ack = ack;
    this.status = 'connected';
    this.nViews = ack.rig.n_views;
    this.layout = {
      columns: ack.layout.columns,
      rows: ack.layout.rows,
      tileWidth: ack.layout.tile_width,
      tileHeight: ack.layout.tile_height,
    };
    this.generationFloor = ack.generation;
    this.tiles.clear();
    this.dirty = true;
  }

  /** Record that a scene-changing message went out (every one bumps the server). */
  noteMutationSent(): void {
    this.generationFloor += 1;
    this.focusMarker = null;
    this.dirty = true;
  }

  mirrorCamera(update: Partial<CameraMirror>): void {
    this.camera = { ...this.camera, ...update };
  }

  /** Accept or discard an arriving tile; returns whether it will be displayed. */
  acceptTile(header: ViewFrameHeader, payload: Uint8Array): boolean {
    if (header.view < 0 || header.view >= this.nViews) return false;
    if (header.generation < this.generationFloor) return false;
    const existing = this.tiles.get(header.view);
    if (existing && header.generation < existing.generation) return false;
    if (header.generation > this.generationFloor) {
      // the server is ahead of our accounting (e.g. server-side refocus)
      this.generationFloor = header.generation;
    }
    this.tiles.set(header.view, {
      generation: header.generation,
      width: header.width,
      height: header.height,
      payload,
    });
    this.dirty = true;
    return true;
  }

  applyFocusResult(msg: FocusResultMessage): void {
    if (msg.hit) {
      this.focusMarker = { x: 0.5, y: 0.5, distance: msg.distance ?? 0 };
      if (msg.generation !== undefined && msg.generation > this.generationFloor) {
        this.generationFloor = msg.generation;
      }
      if (msg.point) {
        this.camera = { ...this.camera, center: msg.point };
      }
      this.statusMessage = `focus at ${msg.distance?.toFixed(1)} um`;
    } else {
      this.focusMarker = null;
      this.statusMessage = 'autofocus: nothing under the view center';
    }
    this.dirty = true;
  }

  tile(view: number): TileEntry | undefined {
    return this.tiles.get(view);
  }

  displayedTiles(): Map<number, TileEntry> {
    return this.tiles;
  }

  /** Number of views currently shown from the newest generation. */
  currentGenerationTileCount(): number {
    let count = 0;
    for (const entry of this.tiles.values()) {
      if (entry.generation === this.generationFloor) count += 1;
    }
    return count;
  }

  centerView(): number {
    return Math.floor(this.nViews / 2);
  }

  /** The two views an anaglyph or side-by-side display pairs around the center. */
  eyeViews(separation = 2): [number, number] {
    const mid = this.centerView();
    const left = Math.max(0, mid - separation);
    const right = Math.min(this.nViews - 1, mid + separation);
    return [left, right];
  }

  consumeDirty(): boolean {
    const was = this.dirty;
    this.dirty = false;
    return was;
  }

  markDirty(): void {
    this.dirty = true;
  }
}
