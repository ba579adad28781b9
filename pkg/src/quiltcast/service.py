"""Interactive stream service: one progressive render session per WebSocket client.

Protocol (version 1): text frames carry JSON control messages, binary frames
carry view payloads. Every binary frame is a 4-byte big-endian header length,
a JSON header, then a lossless PNG of the view tile.

Client -> server message types:
  hello              {type, protocol_version, volume?}
  set_camera         {type, azimuth, elevation, distance, center: [x,y,z],
                      projection: {kind: "orthographic"|"perspective",
                                   view_height? | vfov?}, aspect?}
  set_settings       {type, mode?, layering?, low?, high?, gamma?, sample_step?}
  set_stereo         {type, mode, eye_distance?, eye_angle?}
  set_rig            {type, n_views, step_deg}
  set_timepoint      {type, t}
  autofocus_request  {type, threshold?}

Server -> client:
  session_ack        {type, session_id, protocol_version, generation,
                      volume: {name, dims, spacing, channel_names, timepoints},
                      rig: {n_views, step_deg},
                      layout: {columns, rows, tile_width, tile_height}}
  view_frame         binary, header {type, view, generation, width, height, encoding}
  focus_result       {type, hit, point?, distance?, generation?}
  error              {type, code, text}
"""

from __future__ import annotations

import asyncio
import json
import struct
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import multiprocessing
from aiohttp import WSMsgType, web

from .camera import Camera, Orthographic, Perspective, ViewRig
from .frame import Frame, decode_png, encode_png
from .multiview import LenticularCalibration, StereoParams
from .render import RenderSettings, autofocus, render
from .scheduler import RenderSession, ViewUpdate, default_camera, default_layout
from .volume import Volume, VolumeError, load_volume, read_sidecar

PROTOCOL_VERSION = 1

_STATE_KEY = web.AppKey("state", object)
_STATIC_KEY = web.AppKey("static_dir", object)


@dataclass(frozen=True)
class VolumeInfo:
    """One sidecar found by list_volumes; `ok` is False for unreadable entries."""

    path: Path
    name: str
    ok: bool
    dims: tuple[int, int, int] | None = None
    spacing: tuple[float, float, float] | None = None
    channel_names: tuple[str, ...] = ()
    timepoints: int = 0
    error: str | None = None


def list_volumes(volume_dir: str | Path) -> list[VolumeInfo]:
    """Enumerate *.meta sidecars; invalid ones become warning entries, not failures."""
    directory = Path(volume_dir)
    if not directory.is_dir():
        raise FileNotFoundError(f"volume directory not found: {directory}")
    entries: list[VolumeInfo] = []
    for path in sorted(directory.glob("*.meta")):
        try:
            meta = read_sidecar(path)
            entries.append(VolumeInfo(
                path=path, name=path.stem, ok=True,
                dims=meta["dims"], spacing=meta["spacing"],
                channel_names=tuple(meta["channel_names"]),
                timepoints=len(meta["data"]),
            ))
        except VolumeError as exc:
            entries.append(VolumeInfo(path=path, name=path.stem, ok=False,
                                      error=str(exc)))
    return entries


@dataclass
class ServiceConfig:
    volume_dir: Path
    host: str = "127.0.0.1"
    port: int = 8799
    rig: ViewRig = field(default_factory=ViewRig)
    tile_width: int = 256
    tile_height: int = 256
    settings: RenderSettings = field(default_factory=RenderSettings)
    max_sessions: int = 4
    workers: int = 1
    static_dir: Path | None = None
    calibration: LenticularCalibration | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.port < 65536:  # 0 binds an ephemeral port
            raise ValueError(f"invalid port {self.port}")
        if self.max_sessions < 1:
            raise ValueError("max_sessions must be >= 1")


# ---------------------------------------------------------------------------
# Wire encoding

def encode_view_frame(update: ViewUpdate) -> bytes:
    header = json.dumps({
        "type": "view_frame",
        "view": update.view_index,
        "generation": update.generation,
        "width": update.frame.width,
        "height": update.frame.height,
        "encoding": "png",
    }).encode("utf-8")
    return struct.pack(">I", len(header)) + header + encode_png(update.frame)


def decode_binary_message(data: bytes) -> tuple[dict, Frame]:
    if len(data) < 4:
        raise ValueError("binary message too short")
    (header_len,) = struct.unpack(">I", data[:4])
    header = json.loads(data[4 : 4 + header_len].decode("utf-8"))
    frame = decode_png(data[4 + header_len :])
    if frame.size != (header["width"], header["height"]):
        raise ValueError(f"payload is {frame.size}, header says "
                         f"{(header['width'], header['height'])}")
    return header, frame


def _camera_from_message(msg: dict, volume: Volume, base: Camera) -> Camera:
    proj_msg = msg.get("projection") or {}
    kind = proj_msg.get("kind", "orthographic")
    if kind == "perspective":
        projection = Perspective(vfov_deg=float(proj_msg.get("vfov", 40.0)))
    elif kind == "orthographic":
        projection = Orthographic(
            view_height=float(proj_msg.get("view_height", volume.diagonal)))
    else:
        raise ValueError(f"unknown projection kind {kind!r}")
    center = msg.get("center")
    return Camera(
        rotation_center=tuple(float(v) for v in center) if center else base.rotation_center,
        distance=float(msg.get("distance", base.distance)),
        projection=projection,
        azimuth_deg=float(msg.get("azimuth", 0.0)),
        elevation_deg=float(msg.get("elevation", 0.0)),
        aspect=float(msg.get("aspect", base.aspect)),
    )


class _Connection:
    """Per-connection protocol state and the progressive render pump."""

    def __init__(self, app_state: "_AppState", ws: web.WebSocketResponse):
        self.state = app_state
        self.ws = ws
        self.session: RenderSession | None = None
        self.volume_name = ""
        self.wake = asyncio.Event()
        self.pump_task: asyncio.Task | None = None

    async def send_json(self, payload: dict) -> None:
        await self.ws.send_str(json.dumps(payload))

    async def error(self, code: str, text: str) -> None:
        await self.send_json({"type": "error", "code": code, "text": text})

    async def handle_hello(self, msg: dict) -> bool:
        if int(msg.get("protocol_version", -1)) != PROTOCOL_VERSION:
            await self.error("bad_protocol",
                             f"server speaks protocol {PROTOCOL_VERSION}")
            return False
        volumes = [v for v in list_volumes(self.state.config.volume_dir) if v.ok]
        if not volumes:
            await self.error("no_volumes", "no loadable volumes on the server")
            return False
        wanted = msg.get("volume")
        chosen = None
        if wanted is not None:
            chosen = next((v for v in volumes if v.name == wanted), None)
            if chosen is None:
                await self.error("unknown_volume", f"no volume named {wanted!r}")
                return False
        else:
            chosen = volumes[0]

        config = self.state.config
        volume = load_volume(chosen.path)
        camera = default_camera(volume, config.tile_width / config.tile_height)
        layout = default_layout(config.rig.n_views, config.tile_width,
                                config.tile_height)
        self.session = RenderSession(volume, camera, config.rig, config.settings,
                                     layout=layout, calibration=config.calibration)
        self.volume_name = chosen.name
        await self.send_json({
            "type": "session_ack",
            "session_id": self.session.session_id,
            "protocol_version": PROTOCOL_VERSION,
            "generation": self.session.generation,
            "volume": {
                "name": chosen.name,
                "dims": list(volume.dims),
                "spacing": list(volume.spacing),
                "channel_names": [ch.name for ch in volume.channels],
                "timepoints": volume.n_timepoints,
            },
            "rig": {"n_views": config.rig.n_views, "step_deg": config.rig.step_deg},
            "layout": {
                "columns": layout.columns,
                "rows": layout.rows,
                "tile_width": layout.tile_width,
                "tile_height": layout.tile_height,
            },
        })
        self.pump_task = asyncio.create_task(self.pump())
        self.wake.set()
        return True

    async def handle_message(self, msg: dict) -> bool:
        """Apply one control message; False closes the connection."""
        session = self.session
        assert session is not None
        mtype = msg.get("type")
        if mtype == "set_camera":
            camera = _camera_from_message(msg, session.volume, session.camera)
            session.update_camera(camera)
            self.wake.set()
        elif mtype == "set_settings":
            current = session.settings
            settings = RenderSettings(
                mode=msg.get("mode", current.mode),
                layering=bool(msg.get("layering", current.layering)),
                sample_step=msg.get("sample_step", current.sample_step),
                background=current.background,
            )
            volume = None
            if any(k in msg for k in ("low", "high", "gamma")):
                volume = session.volume
                for i, ch in enumerate(volume.channels):
                    tf = replace(ch.transfer,
                                 low=float(msg.get("low", ch.transfer.low)),
                                 high=float(msg.get("high", ch.transfer.high)),
                                 gamma=float(msg.get("gamma", ch.transfer.gamma)))
                    volume = volume.with_transfer(i, tf)
            session.update_settings(settings, volume=volume)
            self.wake.set()
        elif mtype == "set_stereo":
            session.update_stereo(StereoParams(
                mode=msg.get("mode", "turntable"),
                eye_distance=float(msg.get("eye_distance", 0.0)),
                eye_angle=float(msg.get("eye_angle", 0.0)),
            ))
        elif mtype == "set_rig":
            rig = ViewRig(n_views=int(msg["n_views"]),
                          step_deg=float(msg.get("step_deg", 1.0)))
            session.update_rig(rig, default_layout(
                rig.n_views, self.state.config.tile_width, self.state.config.tile_height))
            self.wake.set()
        elif mtype == "set_timepoint":
            try:
                session.advance_timepoint(int(msg["t"]))
                self.wake.set()
            except IndexError as exc:
                await self.error("bad_timepoint", str(exc))
        elif mtype == "autofocus_request":
            await self.handle_autofocus(float(msg.get("threshold", 0.1)))
        else:
            await self.error("unknown_message", f"unknown message type {mtype!r}")
            return False
        return True

    async def handle_autofocus(self, threshold: float) -> None:
        session = self.session
        assert session is not None
        generation, volume, cameras, settings, _ = session.snapshot()
        mid = len(cameras) // 2
        loop = asyncio.get_running_loop()
        result = await loop.run_in_executor(
            self.state.executor, autofocus, volume, cameras[mid], settings, threshold)
        if result.hit:
            new_gen = session.refocus(result.point)
            await self.send_json({"type": "focus_result", "hit": True,
                                  "point": list(result.point),
                                  "distance": result.distance,
                                  "generation": new_gen})
            self.wake.set()
        else:
            await self.send_json({"type": "focus_result", "hit": False})

    async def pump(self) -> None:
        """Render pending views and push them; stale results are never sent."""
        session = self.session
        assert session is not None
        loop = asyncio.get_running_loop()
        while not self.ws.closed:
            pending = session.pending_views()
            if not pending:
                self.wake.clear()
                if session.pending_views():
                    continue  # raced with an invalidation
                await self.wake.wait()
                continue
            generation, volume, cameras, settings, size = session.snapshot()
            pending = session.pending_views()
            if not pending:
                continue
            index = pending[0]
            frame = await loop.run_in_executor(
                self.state.executor, render, volume, cameras[index], settings, size)
            update = ViewUpdate(session.session_id, index, generation, frame)
            if session.complete_view(update) and session.generation == update.generation:
                try:
                    await self.ws.send_bytes(encode_view_frame(update))
                except ConnectionResetError:
                    return


class _AppState:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.active_sessions = 0
        if config.workers > 1:
            from .render import ensure_kernels_ready
            ensure_kernels_ready()  # compile before the pool forks
            ctx = multiprocessing.get_context("fork")
            self.executor: Executor = ProcessPoolExecutor(
                max_workers=config.workers, mp_context=ctx)
        else:
            self.executor = ThreadPoolExecutor(max_workers=1)

    def shutdown(self) -> None:
        self.executor.shutdown(wait=False, cancel_futures=True)


async def _ws_handler(request: web.Request) -> web.WebSocketResponse:
    state: _AppState = request.app[_STATE_KEY]
    ws = web.WebSocketResponse(max_msg_size=64 * 1024 * 1024)
    await ws.prepare(request)

    if state.active_sessions >= state.config.max_sessions:
        await ws.send_str(json.dumps({
            "type": "error", "code": "session_limit",
            "text": f"server is at its limit of {state.config.max_sessions} sessions",
        }))
        await ws.close()
        return ws

    state.active_sessions += 1
    conn = _Connection(state, ws)
    try:
        async for msg in ws:
            if msg.type == WSMsgType.TEXT:
                try:
                    payload = json.loads(msg.data)
                except json.JSONDecodeError:
                    await conn.error("bad_json", "message is not valid JSON")
                    break
                try:
                    if conn.session is None:
                        if payload.get("type") != "hello":
                            await conn.error("expected_hello",
                                             "first message must be hello")
                            break
                        if not await conn.handle_hello(payload):
                            break
                    elif not await conn.handle_message(payload):
                        break
                except (KeyError, TypeError, ValueError, VolumeError,
                        FileNotFoundError) as exc:
                    await conn.error("bad_message", str(exc))
                    break
            elif msg.type == WSMsgType.BINARY:
                await conn.error("unexpected_binary", "clients send text messages only")
                break
            elif msg.type == WSMsgType.ERROR:
                break
    finally:
        state.active_sessions -= 1
        if conn.pump_task is not None:
            conn.pump_task.cancel()
            try:
                await conn.pump_task
            except (asyncio.CancelledError, Exception):
                pass
        if not ws.closed:
            await ws.close()
    return ws


async def _volumes_handler(request: web.Request) -> web.Response:
    state: _AppState = request.app[_STATE_KEY]
    entries = []
    for info in list_volumes(state.config.volume_dir):
        entries.append({
            "name": info.name,
            "ok": info.ok,
            "dims": list(info.dims) if info.dims else None,
            "spacing": list(info.spacing) if info.spacing else None,
            "channel_names": list(info.channel_names),
            "timepoints": info.timepoints,
            "error": info.error,
        })
    return web.json_response(entries)


_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><title>quiltcast</title></head>
<body><h1>quiltcast render service</h1>
<p>The viewer assets are not installed. Connect a protocol client to
<code>/ws</code> or list volumes at <code>/volumes</code>.</p></body></html>
"""


async def _index_handler(request: web.Request) -> web.Response:
    static_dir: Path | None = request.app[_STATIC_KEY]
    if static_dir is not None:
        index = static_dir / "index.html"
        if index.is_file():
            return web.FileResponse(index)
    return web.Response(text=_PLACEHOLDER_PAGE, content_type="text/html")


def make_app(config: ServiceConfig) -> web.Application:
    app = web.Application()
    state = _AppState(config)
    app[_STATE_KEY] = state
    app[_STATIC_KEY] = config.static_dir

    app.router.add_get("/ws", _ws_handler)
    app.router.add_get("/volumes", _volumes_handler)
    app.router.add_get("/", _index_handler)
    if config.static_dir is not None and config.static_dir.is_dir():
        app.router.add_static("/assets", config.static_dir)

    async def on_cleanup(app: web.Application) -> None:
        state.shutdown()

    app.on_cleanup.append(on_cleanup)
    return app


async def serve(config: ServiceConfig) -> web.AppRunner:
    """Start the service; returns the runner (caller keeps the loop alive)."""
    runner = web.AppRunner(make_app(config))
    await runner.setup()
    site = web.TCPSite(runner, config.host, config.port)
    await site.start()
    return runner


def run_service(config: ServiceConfig) -> None:
    """Blocking entry point for the CLI."""

    async def _run() -> None:
        runner = await serve(config)
        print(f"quiltcast service on http://{config.host}:{config.port} "
              f"(volumes: {config.volume_dir})")
        try:
            while True:
                await asyncio.sleep(3600)
        finally:
            await runner.cleanup()

    try:
        asyncio.run(_run())
    except KeyboardInterrupt:
        pass
