/**
 * Session driver: applies server messages to the ViewerState and sends
 * control messages. The transport is injected so tests can run a scripted
 * session without a socket; the browser entry point wraps a WebSocket.
 */

import {
  CameraMessage,
  decodeServerText,
  decodeViewFrame,
  encodeAutofocusRequest,
  encodeHello,
  encodeSetCamera,
  encodeSetSettings,
  encodeSetTimepoint,
} from './protocol.js';
import type { ViewerState } from './state.js';

export interface Transport {
  send(text: string): void;
}

export interface SessionEvents {
  onTileAccepted?(view: number): void;
  onFocusResult?(hit: boolean): void;
  onError?(code: string, text: string): void;
}

export class SessionConnection {
  private baseCamera: CameraMessage | null = null;

  constructor(
    private readonly state: ViewerState,
    private readonly transport: Transport,
    private readonly events: SessionEvents = {},
  ) {}

  hello(volume?: string): void {
    this.state.status = 'connecting';
    this.transport.send(encodeHello(volume));
  }

  /** Dispatch one text frame from the server. */
  handleText(data: string): void {
    const msg = decodeServerText(data);
    if (msg.type === 'session_ack') {
      this.state.applyAck(msg);
      const [ex, ey, ez] = msg.volume.dims.map((n, i) => n * msg.volume.spacing[i]);
      const diagonal = Math.sqrt(ex * ex + ey * ey + ez * ez);
      this.baseCamera = {
        azimuth: 0,
        elevation: 0,
        distance: 2 * diagonal,
        center: [ex / 2, ey / 2, ez / 2],
        projection: { kind: 'orthographic', view_height: diagonal },
        aspect: msg.layout.tile_width / msg.layout.tile_height,
      };
      this.state.mirrorCamera({
        azimuth: 0,
        elevation: 0,
        distance: this.baseCamera.distance,
        center: this.baseCamera.center as [number, number, number],
      });
    } else if (msg.type === 'focus_result') {
      this.state.applyFocusResult(msg);
      this.events.onFocusResult?.(msg.hit);
    } else {
      this.state.statusMessage = `server error ${msg.code}: ${msg.text}`;
      this.state.markDirty();
      this.events.onError?.(msg.code, msg.text);
    }
  }

  /** Dispatch one binary frame from the server. */
  handleBinary(buffer: ArrayBuffer): void {
    let decoded;
    try {
      decoded = decodeViewFrame(buffer);
    } catch (err) {
      this.state.statusMessage = `bad tile payload: ${(err as Error).message}`;
      this.state.markDirty();
      return;
    }
    if (this.state.acceptTile(decoded.header, decoded.payload)) {
      this.events.onTileAccepted?.(decoded.header.view);
    }
  }

  /** Send the camera for an orbit pose; drops input while disconnected. */
  sendCameraPose(azimuth: number, elevation: number, distanceScale = 1): boolean {
    if (this.state.status !== 'connected' || this.baseCamera === null) return false;
    const camera: CameraMessage = {
      ...this.baseCamera,
      azimuth,
      elevation,
      distance: (this.baseCamera.distance ?? 0) * distanceScale,
      center: this.state.camera.center,
    };
    this.transport.send(encodeSetCamera(camera));
    this.state.noteMutationSent();
    this.state.mirrorCamera({ azimuth, elevation, distance: camera.distance });
    return true;
  }

  /** Autofocus request; no message is sent while disconnected. */
  requestAutofocus(threshold = 0.1): boolean {
    if (this.state.status !== 'connected') return false;
    this.transport.send(encodeAutofocusRequest(threshold));
    return true;
  }

  setTimepoint(t: number): boolean {
    if (this.state.status !== 'connected') return false;
    this.transport.send(encodeSetTimepoint(t));
    this.state.timepoint = t;
    this.state.noteMutationSent();
    return true;
  }

  setSettings(settings: Record<string, unknown>): boolean {
    if (this.state.status !== 'connected') return false;
    this.transport.send(encodeSetSettings(settings));
    this.state.noteMutationSent();
    return true;
  }
}
