/**
 * Browser entry point: wires the WebSocket, orbit input, state, and canvas.
 */

import { SessionConnection } from './connection.js';
import { OrbitControl } from './orbit.js';
import { ViewerCanvas } from './render.js';
import { ViewerState, DisplayMode } from './state.js';

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function setStatus(text: string): void {
  byId<HTMLSpanElement>('status').textContent = text;
}

async function listVolumes(): Promise<string[]> {
  const resp = await fetch('/volumes');
  const entries = (await resp.json()) as { name: string; ok: boolean }[];
  return entries.filter((e) => e.ok).map((e) => e.name);
}

async function start(): Promise<void> {
  const canvas = byId<HTMLCanvasElement>('view');
  const modeSelect = byId<HTMLSelectElement>('mode');
  const volumeSelect = byId<HTMLSelectElement>('volume');
  const focusButton = byId<HTMLButtonElement>('autofocus');
  const timepointInput = byId<HTMLInputElement>('timepoint');

  const state = new ViewerState();
  const painter = new ViewerCanvas(canvas);
  const orbit = new OrbitControl();

  for (const name of await listVolumes()) {
    const option = document.createElement('option');
    option.value = name;
    option.textContent = name;
    volumeSelect.appendChild(option);
  }

  const scheme = location.protocol === 'https:' ? 'wss' : 'ws';
  const ws = new WebSocket(`${scheme}://${location.host}/ws`);
  ws.binaryType = 'arraybuffer';
  const connection = new SessionConnection(state, ws, {
    onFocusResult: (hit) => setStatus(hit ? state.statusMessage : 'no structure under center'),
    onError: (code, text) => setStatus(`error ${code}: ${text}`),
  });

  ws.onopen = () => {
    connection.hello(volumeSelect.value || undefined);
    setStatus('connected, waiting for session');
  };
  ws.onmessage = (event) => {
    if (typeof event.data === 'string') {
      connection.handleText(event.data);
      if (state.ack) {
        const tp = state.ack.volume.timepoints;
        timepointInput.max = String(tp - 1);
        timepointInput.disabled = tp <= 1;
        setStatus(`session ${state.ack.session_id}: ${state.ack.volume.name}`);
      }
    } else {
      connection.handleBinary(event.data as ArrayBuffer);
      setStatus(`views: ${state.currentGenerationTileCount()}/${state.nViews} current`);
    }
  };
  ws.onclose = () => {
    state.status = 'disconnected';
    setStatus('disconnected');
  };

  // pointer input
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener('pointerdown', (e) => {
    dragging = true;
    lastX = e.clientX;
    lastY = e.clientY;
    canvas.setPointerCapture(e.pointerId);
  });
  canvas.addEventListener('pointermove', (e) => {
    if (!dragging) return;
    orbit.drag(e.clientX - lastX, e.clientY - lastY);
    lastX = e.clientX;
    lastY = e.clientY;
  });
  canvas.addEventListener('pointerup', () => {
    dragging = false;
  });
  canvas.addEventListener('wheel', (e) => {
    e.preventDefault();
    orbit.zoom(Math.sign(e.deltaY));
  });

  modeSelect.onchange = () => {
    state.displayMode = modeSelect.value as DisplayMode;
    state.markDirty();
  };
  volumeSelect.onchange = () => location.reload();
  focusButton.onclick = () => connection.requestAutofocus(0.1);
  timepointInput.onchange = () => connection.setTimepoint(Number(timepointInput.value));

  const tick = () => {
    const pose = orbit.flush();  // one coalesced camera message per tick
    if (pose) {
      connection.sendCameraPose(pose.azimuth, pose.elevation, pose.distanceScale);
    }
    if (state.consumeDirty()) {
      void painter.draw(state);
    }
    requestAnimationFrame(tick);
  };
  requestAnimationFrame(tick);
}

void start();
