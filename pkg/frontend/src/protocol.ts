/**
 * Wire protocol spoken with the render service (protocol version 1).
 *
 * Text frames carry JSON control messages. Binary frames carry one rendered
 * view tile: a 4-byte big-endian header length, a JSON header, then a PNG.
 */

export const PROTOCOL_VERSION = 1;

export interface ProjectionMessage {
  kind: 'orthographic' | 'perspective';
  view_height?: number;
  vfov?: number;
}

export interface CameraMessage {
  azimuth: number;
  elevation: number;
  distance?: number;
  center?: [number, number, number];
  projection?: ProjectionMessage;
  aspect?: number;
}

export interface SessionAck {
  type: 'session_ack';
  session_id: string;
  protocol_version: number;
  generation: number;
  volume: {
    name: string;
    dims: [number, number, number];
    spacing: [number, number, number];
    channel_names: string[];
    timepoints: number;
  };
  rig: { n_views: number; step_deg: number };
  layout: { columns: number; rows: number; tile_width: number; tile_height: number };
}

export interface FocusResultMessage {
  type: 'focus_result';
  hit: boolean;
  point?: [number, number, number];
  distance?: number;
  generation?: number;
}

export interface ErrorMessage {
  type: 'error';
  code: string;
  text: string;
}

export type ServerTextMessage = SessionAck | FocusResultMessage | ErrorMessage;

export interface ViewFrameHeader {
  type: 'view_frame';
  view: number;
  generation: number;
  width: number;
  height: number;
  encoding: string;
}

export function encodeHello(volume?: string): string {
  const msg: Record<string, unknown> = { type: 'hello', protocol_version: PROTOCOL_VERSION };
  if (volume !== undefined) msg.volume = volume;
  return JSON.stringify(msg);
}

export function encodeSetCamera(camera: CameraMessage): string {
  return JSON.stringify({ type: 'set_camera', ...camera });
}

export function encodeAutofocusRequest(threshold: number): string {
  return JSON.stringify({ type: 'autofocus_request', threshold });
}

export function encodeSetTimepoint(t: number): string {
  return JSON.stringify({ type: 'set_timepoint', t });
}

export function encodeSetSettings(settings: Record<string, unknown>): string {
  return JSON.stringify({ type: 'set_settings', ...settings });
}

export function decodeServerText(data: string): ServerTextMessage {
  const msg = JSON.parse(data);
  if (msg.type !== 'session_ack' && msg.type !== 'focus_result' && msg.type !== 'error') {
    throw new Error(`unexpected server message type: ${msg.type}`);
  }
  return msg as ServerTextMessage;
}

/** Split a binary view_frame message into its header and PNG payload. */
export function decodeViewFrame(buffer: ArrayBuffer): { header: ViewFrameHeader; payload: Uint8Array } {
  if (buffer.byteLength < 4) throw new Error('binary message too short');
  const headerLength = new DataView(buffer).getUint32(0, false);
  if (4 + headerLength > buffer.byteLength) throw new Error('corrupt view_frame header');
  const headerText = new TextDecoder().decode(new Uint8Array(buffer, 4, headerLength));
  const header = JSON.parse(headerText) as ViewFrameHeader;
  if (header.type !== 'view_frame') throw new Error(`unexpected binary message: ${header.type}`);
  const payload = new Uint8Array(buffer, 4 + headerLength);
  return { header, payload };
}
