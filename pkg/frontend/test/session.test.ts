/**
 * Scripted end-to-end session against a fake transport: connect, drag,
 * receive all tiles, autofocus, then verify stale tiles after a camera
 * change are never shown.
 */

import { describe, expect, it } from 'vitest';

import { SessionConnection, Transport } from '../src/connection.js';
import { OrbitControl } from '../src/orbit.js';
import { ViewerState } from '../src/state.js';
import { ack } from './state.test.js';

class FakeTransport implements Transport {
  sent: Record<string, unknown>[] = [];

  send(text: string): void {
    this.sent.push(JSON.parse(text));
  }

  ofType(type: string): Record<string, unknown>[] {
    return this.sent.filter((m) => m.type === type);
  }
}

function viewFrameBinary(view: number, generation: number): ArrayBuffer {
  const header = new TextEncoder().encode(JSON.stringify({
    type: 'view_frame', view, generation, width: 32, height: 32, encoding: 'png',
  }));
  const payload = new Uint8Array([view, generation]); // stand-in for PNG bytes
  const out = new Uint8Array(4 + header.length + payload.length);
  new DataView(out.buffer).setUint32(0, header.length, false);
  out.set(header, 4);
  out.set(payload, 4 + header.length);
  return out.buffer;
}

function connectedSession() {
  const state = new ViewerState();
  const transport = new FakeTransport();
  const connection = new SessionConnection(state, transport);
  connection.hello();
  connection.handleText(JSON.stringify(ack(45)));
  return { state, transport, connection };
}

describe('scripted viewer session', () => {
  it('drag, full stream, and autofocus end in the expected state', () => {
    const { state, transport, connection } = connectedSession();
    const orbit = new OrbitControl();

    // two drags inside one tick coalesce into a single set_camera of +10 deg
    orbit.drag(15, 0);
    orbit.drag(25, 0);
    const pose = orbit.flush()!;
    connection.sendCameraPose(pose.azimuth, pose.elevation);
    expect(transport.ofType('set_camera')).toHaveLength(1);
    expect(transport.ofType('set_camera')[0].azimuth).toBe(10);
    expect(state.camera.azimuth).toBe(10);

    // all 45 views of the post-drag generation arrive
    for (let view = 0; view < 45; view++) {
      connection.handleBinary(viewFrameBinary(view, 1));
    }
    expect(state.currentGenerationTileCount()).toBe(45);

    // autofocus: request goes out, hit draws the marker and bumps
    connection.requestAutofocus(0.1);
    expect(transport.ofType('autofocus_request')).toHaveLength(1);
    connection.handleText(JSON.stringify({
      type: 'focus_result', hit: true, point: [8, 8, 8], distance: 37.5, generation: 2,
    }));
    expect(state.focusMarker).not.toBeNull();
    for (let view = 0; view < 45; view++) {
      connection.handleBinary(viewFrameBinary(view, 2));
    }
    expect(state.currentGenerationTileCount()).toBe(45);
    expect(state.camera.azimuth).toBe(10); // mirror still reflects the drag
  });

  it('stale tiles injected after a camera change are never displayed', () => {
    const { state, connection } = connectedSession();
    for (let view = 0; view < 45; view++) {
      connection.handleBinary(viewFrameBinary(view, 0));
    }
    connection.sendCameraPose(5, 0);

    // a straggler from the superseded generation arrives late
    expect(state.acceptTile(
      { type: 'view_frame', view: 7, generation: 0, width: 32, height: 32, encoding: 'png' },
      new Uint8Array(1),
    )).toBe(false);
    connection.handleBinary(viewFrameBinary(7, 0));
    expect(state.tile(7)?.generation).toBe(0); // the old tile persists, unreplaced
    expect(state.currentGenerationTileCount()).toBe(0);

    // the fresh generation replaces everything
    for (let view = 0; view < 45; view++) {
      connection.handleBinary(viewFrameBinary(view, 1));
    }
    expect(state.currentGenerationTileCount()).toBe(45);
  });

  it('input while disconnected sends nothing', () => {
    const state = new ViewerState();
    const transport = new FakeTransport();
    const connection = new SessionConnection(state, transport);
    expect(connection.sendCameraPose(10, 0)).toBe(false);
    expect(connection.requestAutofocus()).toBe(false);
    expect(transport.sent).toHaveLength(0);
  });

  it('malformed tile payloads surface in the status bar and are skipped', () => {
    const { state, connection } = connectedSession();
    connection.handleBinary(new Uint8Array([0, 0]).buffer);
    expect(state.statusMessage).toMatch(/bad tile/);
    expect(state.currentGenerationTileCount()).toBe(0);
  });

  it('server errors land in the status line', () => {
    const { state, connection } = connectedSession();
    connection.handleText(JSON.stringify({ type: 'error', code: 'bad_timepoint',
                                           text: 'timepoint 9 out of range' }));
    expect(state.statusMessage).toMatch(/bad_timepoint/);
  });
});
