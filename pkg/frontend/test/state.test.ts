import { describe, expect, it } from 'vitest';

import type { SessionAck, ViewFrameHeader } from '../src/protocol.js';
import { ViewerState } from '../src/state.js';

export function ack(nViews = 45): SessionAck {
  return {
    type: 'session_ack',
    session_id: 'abc123',
    protocol_version: 1,
    generation: 0,
    volume: {
      name: 'sample',
      dims: [16, 16, 16],
      spacing: [1, 1, 1],
      channel_names: ['raw'],
      timepoints: 1,
    },
    rig: { n_views: nViews, step_deg: 1 },
    layout: { columns: 9, rows: 5, tile_width: 32, tile_height: 32 },
  };
}

function header(view: number, generation: number): ViewFrameHeader {
  return { type: 'view_frame', view, generation, width: 32, height: 32, encoding: 'png' };
}

const payload = new Uint8Array([0]);

describe('tile acceptance', () => {
  it('accepts tiles of the current generation', () => {
    const state = new ViewerState();
    state.applyAck(ack());
    expect(state.acceptTile(header(0, 0), payload)).toBe(true);
    expect(state.currentGenerationTileCount()).toBe(1);
  });

  it('discards tiles older than the mutation floor', () => {
    const state = new ViewerState();
    state.applyAck(ack());
    state.noteMutationSent(); // we sent set_camera; server generation is now >= 1
    expect(state.acceptTile(header(3, 0), payload)).toBe(false);
    expect(state.tile(3)).toBeUndefined();
  });

  it('never replaces a tile with an older generation', () => {
    const state = new ViewerState();
    state.applyAck(ack());
    state.acceptTile(header(5, 2), payload); // server ahead of us
    expect(state.acceptTile(header(5, 1), payload)).toBe(false);
    expect(state.tile(5)?.generation).toBe(2);
  });

  it('keeps previously displayed tiles until replaced', () => {
    const state = new ViewerState();
    state.applyAck(ack());
    state.acceptTile(header(1, 0), payload);
    state.noteMutationSent();
    expect(state.tile(1)).toBeDefined(); // stays visible (gradual update)
    expect(state.currentGenerationTileCount()).toBe(0); // but no longer current
    state.acceptTile(header(1, 1), payload);
    expect(state.currentGenerationTileCount()).toBe(1);
  });

  it('rejects out-of-range view indices', () => {
    const state = new ViewerState();
    state.applyAck(ack(5));
    expect(state.acceptTile(header(5, 0), payload)).toBe(false);
  });
});

describe('focus results', () => {
  it('hit places the marker and raises the generation floor', () => {
    const state = new ViewerState();
    state.applyAck(ack());
    state.applyFocusResult({ type: 'focus_result', hit: true, point: [1, 2, 3],
                             distance: 42, generation: 4 });
    expect(state.focusMarker).not.toBeNull();
    expect(state.camera.center).toEqual([1, 2, 3]);
    expect(state.acceptTile(header(0, 3), payload)).toBe(false); // pre-refocus render
    expect(state.acceptTile(header(0, 4), payload)).toBe(true);
  });

  it('no-hit clears the marker and leaves the camera center alone', () => {
    const state = new ViewerState();
    state.applyAck(ack());
    state.mirrorCamera({ center: [8, 8, 8] });
    state.applyFocusResult({ type: 'focus_result', hit: false });
    expect(state.focusMarker).toBeNull();
    expect(state.camera.center).toEqual([8, 8, 8]);
    expect(state.statusMessage).toMatch(/nothing/);
  });
});

describe('eye view selection', () => {
  it('pairs views symmetrically around the center', () => {
    const state = new ViewerState();
    state.applyAck(ack(45));
    expect(state.centerView()).toBe(22);
    expect(state.eyeViews(2)).toEqual([20, 24]);
  });

  it('clamps at the rig edges', () => {
    const state = new ViewerState();
    state.applyAck(ack(3));
    expect(state.eyeViews(5)).toEqual([0, 2]);
  });
});
