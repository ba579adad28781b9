"""Headless protocol client for the stream service.

Drives a render session over the WebSocket protocol and reassembles the
streamed view tiles into a quilt, exactly as the browser viewer would.
Useful for scripting and for verifying service output against batch renders.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import aiohttp

from .frame import Frame
from .multiview import QuiltLayout, assemble_quilt
from .service import PROTOCOL_VERSION, decode_binary_message


class ProtocolError(RuntimeError):
    """The server answered with an error message or broke protocol."""


@dataclass
class ReceivedTile:
    view: int
    generation: int
    frame: Frame


@dataclass
class SessionInfo:
    session_id: str
    volume: dict
    rig: dict
    layout: QuiltLayout
    generation: int
    raw: dict = field(repr=False, default_factory=dict)


class ViewerClient:
    """One protocol session. Use `await ViewerClient.connect(url)`."""

    def __init__(self, http: aiohttp.ClientSession, ws: aiohttp.ClientWebSocketResponse):
        self._http = http
        self._ws = ws
        self.info: SessionInfo | None = None
        self.tiles: dict[int, ReceivedTile] = {}
        self.log: list[ReceivedTile] = []  # arrival order, stale included

    @classmethod
    async def connect(cls, url: str, volume: str | None = None) -> "ViewerClient":
        http = aiohttp.ClientSession()
        try:
            ws = await http.ws_connect(url, max_msg_size=64 * 1024 * 1024)
        except Exception:
            await http.close()
            raise
        client = cls(http, ws)
        hello: dict = {"type": "hello", "protocol_version": PROTOCOL_VERSION}
        if volume is not None:
            hello["volume"] = volume
        await ws.send_str(json.dumps(hello))
        ack = await client._expect_json("session_ack")
        layout = ack["layout"]
        client.info = SessionInfo(
            session_id=ack["session_id"],
            volume=ack["volume"],
            rig=ack["rig"],
            layout=QuiltLayout(
                columns=layout["columns"], rows=layout["rows"],
                tile_width=layout["tile_width"], tile_height=layout["tile_height"],
                n_views=ack["rig"]["n_views"],
            ),
            generation=ack["generation"],
            raw=ack,
        )
        return client

    async def close(self) -> None:
        if not self._ws.closed:
            await self._ws.close()
        await self._http.close()

    async def __aenter__(self) -> "ViewerClient":
        return self

    async def __aexit__(self, *exc) -> None:
        await self.close()

    # -- outgoing -------------------------------------------------------

    async def send(self, payload: dict) -> None:
        await self._ws.send_str(json.dumps(payload))

    async def set_camera(self, *, azimuth: float = 0.0, elevation: float = 0.0,
                         distance: float | None = None, center=None,
                         projection: dict | None = None,
                         aspect: float | None = None) -> None:
        msg: dict = {"type": "set_camera", "azimuth": azimuth, "elevation": elevation}
        if distance is not None:
            msg["distance"] = distance
        if center is not None:
            msg["center"] = list(center)
        if projection is not None:
            msg["projection"] = projection
        if aspect is not None:
            msg["aspect"] = aspect
        await self.send(msg)

    async def set_settings(self, **kwargs) -> None:
        await self.send({"type": "set_settings", **kwargs})

    async def set_rig(self, n_views: int, step_deg: float = 1.0) -> None:
        # note: session info from the hello ack keeps the original layout, so
        # quilt() reassembly applies to the rig the session was opened with
        await self.send({"type": "set_rig", "n_views": n_views, "step_deg": step_deg})

    async def set_timepoint(self, t: int) -> None:
        await self.send({"type": "set_timepoint", "t": t})

    async def request_autofocus(self, threshold: float = 0.1) -> None:
        await self.send({"type": "autofocus_request", "threshold": threshold})

    # -- incoming -------------------------------------------------------

    async def _next_message(self, timeout: float = 60.0):
        msg = await self._ws.receive(timeout=timeout)
        if msg.type == aiohttp.WSMsgType.TEXT:
            return json.loads(msg.data), None
        if msg.type == aiohttp.WSMsgType.BINARY:
            header, frame = decode_binary_message(msg.data)
            tile = ReceivedTile(view=header["view"], generation=header["generation"],
                                frame=frame)
            self.log.append(tile)
            current = self.tiles.get(tile.view)
            if current is None or tile.generation >= current.generation:
                self.tiles[tile.view] = tile
            return header, tile
        raise ProtocolError(f"connection closed: {msg.type}")

    async def _expect_json(self, expected_type: str, timeout: float = 30.0) -> dict:
        while True:
            payload, _ = await self._next_message(timeout=timeout)
            if payload.get("type") == "error":
                raise ProtocolError(f"{payload.get('code')}: {payload.get('text')}")
            if payload.get("type") == expected_type:
                return payload

    async def await_generation(self, generation: int | None = None, *,
                               minimum: int | None = None,
                               timeout: float = 120.0) -> int:
        """Collect view frames until some generation has all views; returns it.

        `generation` waits for one specific generation; `minimum` ignores
        anything older (useful right after sending a scene change).
        """
        assert self.info is not None
        n = self.info.rig["n_views"]

        def complete() -> int | None:
            gens = [t.generation for t in self.tiles.values()]
            if len(gens) < n:
                return None
            candidates = {generation} if generation is not None else {
                g for g in gens if minimum is None or g >= minimum}
            for g in sorted(candidates, reverse=True):
                if sum(1 for t in self.tiles.values() if t.generation == g) == n:
                    return g
            return None

        done = complete()
        while done is None:
            payload, _ = await self._next_message(timeout=timeout)
            if isinstance(payload, dict) and payload.get("type") == "error":
                raise ProtocolError(f"{payload.get('code')}: {payload.get('text')}")
            done = complete()
        return done

    async def await_focus_result(self, timeout: float = 60.0) -> dict:
        return await self._expect_json("focus_result", timeout=timeout)

    def quilt(self, generation: int | None = None) -> Frame:
        """Assemble the received tiles (optionally of one generation) into a quilt."""
        assert self.info is not None
        layout = self.info.layout
        views = []
        for i in range(layout.n_views):
            tile = self.tiles.get(i)
            if tile is None or (generation is not None and tile.generation != generation):
                raise ProtocolError(f"view {i} not received"
                                    + (f" for generation {generation}" if generation else ""))
            views.append(tile.frame)
        return assemble_quilt(views, layout)
