from __future__ import annotations

import asyncio
import json

import aiohttp
import numpy as np
import pytest

from quiltcast import RenderSettings, SyntheticSpec, ViewRig, make_synthetic, save_volume
from quiltcast.client import ProtocolError, ViewerClient
from quiltcast.service import ServiceConfig, list_volumes, serve


def make_volume_dir(tmp_path, *, empty_volume=False):
    spec = SyntheticSpec(shape="sphere", dims=(16, 16, 16), radius=5.0)
    save_volume(make_synthetic(spec), tmp_path / "sphere.meta")
    if empty_volume:
        import numpy as np
        from quiltcast import Volume, VolumeChannel
        ch = VolumeChannel(dims=(8, 8, 8), spacing=(1, 1, 1),
                           samples=np.zeros((8, 8, 8), dtype=np.float32))
        save_volume(Volume(channels=(ch,)), tmp_path / "empty.meta")
    return tmp_path


async def start_service(volume_dir, **overrides):
    config = ServiceConfig(
        volume_dir=volume_dir,
        port=0,
        rig=ViewRig(n_views=5, step_deg=2.0),
        tile_width=48,
        tile_height=48,
        settings=RenderSettings(mode="mip"),
        **overrides,
    )
    runner = await serve(config)
    port = runner.addresses[0][1]
    return runner, f"ws://127.0.0.1:{port}"


CAMERA = dict(azimuth=10.0, elevation=5.0, distance=100.0,
              projection={"kind": "orthographic", "view_height": 16.0}, aspect=1.0)


class TestProtocol:
    def test_hello_ack_carries_metadata(self, tmp_path):
        async def scenario():
            runner, base = await start_service(make_volume_dir(tmp_path))
            try:
                async with await ViewerClient.connect(base + "/ws") as client:
                    info = client.info
                    assert info.volume["name"] == "sphere"
                    assert info.volume["dims"] == [16, 16, 16]
                    assert info.rig == {"n_views": 5, "step_deg": 2.0}
                    assert info.layout.quilt_size == (144, 96)
            finally:
                await runner.cleanup()

        asyncio.run(scenario())

    def test_streamed_quilt_matches_batch_cli(self, tmp_path):
        from quiltcast.cli import main
        from quiltcast import read_png

        volume_dir = make_volume_dir(tmp_path)
        out = tmp_path / "ref.png"
        rc = main(["render", "--volume", str(tmp_path / "sphere.meta"),
                   "--mode", "quilt", "--views", "5", "--step", "2",
                   "--size", "144x96", "--layout", "3x2",
                   "--azimuth", "10", "--elevation", "5", "--distance", "100",
                   "--view-height", "16", "--out", str(out)])
        assert rc == 0
        reference = read_png(next(tmp_path.glob("ref_qs3x2*.png")))

        async def scenario():
            runner, base = await start_service(volume_dir)
            try:
                async with await ViewerClient.connect(base + "/ws") as client:
                    await client.set_camera(**CAMERA)
                    generation = await client.await_generation()
                    return client.quilt(generation)
            finally:
                await runner.cleanup()

        streamed = asyncio.run(scenario())
        np.testing.assert_array_equal(streamed.pixels, reference.pixels)

    def test_generations_never_go_backward_after_update(self, tmp_path):
        async def scenario():
            runner, base = await start_service(make_volume_dir(tmp_path))
            try:
                async with await ViewerClient.connect(base + "/ws") as client:
                    await client.set_camera(**CAMERA)
                    # let a couple of frames arrive, then invalidate
                    while len(client.log) < 2:
                        await client._next_message()
                    await client.set_camera(**{**CAMERA, "azimuth": 19.0})
                    final = await client.await_generation()
                    generations = [t.generation for t in client.log]
                    # ordering: once a generation appears, no older one follows
                    assert generations == sorted(generations)
                    assert sum(1 for t in client.log
                               if t.generation == final) == 5
            finally:
                await runner.cleanup()

        asyncio.run(scenario())

    def test_autofocus_no_hit_on_empty_volume(self, tmp_path):
        async def scenario():
            runner, base = await start_service(make_volume_dir(tmp_path,
                                                               empty_volume=True))
            try:
                async with await ViewerClient.connect(base + "/ws",
                                                      volume="empty") as client:
                    await client.set_camera(**CAMERA)
                    generation = await client.await_generation()
                    await client.request_autofocus(threshold=0.5)
                    result = await client.await_focus_result()
                    assert result["hit"] is False
                    # no re-render: nothing further arrives
                    with pytest.raises(asyncio.TimeoutError):
                        await client._next_message(timeout=0.4)
                    return generation
            finally:
                await runner.cleanup()

        asyncio.run(scenario())

    def test_autofocus_hit_recenters_and_bumps(self, tmp_path):
        async def scenario():
            runner, base = await start_service(make_volume_dir(tmp_path))
            try:
                async with await ViewerClient.connect(base + "/ws") as client:
                    await client.set_camera(**CAMERA)
                    first = await client.await_generation()
                    await client.request_autofocus(threshold=0.5)
                    result = await client.await_focus_result()
                    assert result["hit"] is True
                    assert result["generation"] > first
                    refocused = await client.await_generation(result["generation"])
                    assert refocused == result["generation"]
            finally:
                await runner.cleanup()

        asyncio.run(scenario())

    def test_bad_timepoint_keeps_session_alive(self, tmp_path):
        async def scenario():
            runner, base = await start_service(make_volume_dir(tmp_path))
            try:
                async with await ViewerClient.connect(base + "/ws") as client:
                    await client.set_timepoint(5)
                    # initial-generation tiles may interleave with the reply
                    while True:
                        payload, tile = await client._next_message()
                        if tile is None:
                            break
                    assert payload["type"] == "error"
                    assert payload["code"] == "bad_timepoint"
                    await client.set_camera(**CAMERA)
                    assert await client.await_generation(minimum=1) >= 1
            finally:
                await runner.cleanup()

        asyncio.run(scenario())

    def test_unknown_volume_rejected(self, tmp_path):
        async def scenario():
            runner, base = await start_service(make_volume_dir(tmp_path))
            try:
                with pytest.raises(ProtocolError, match="unknown_volume"):
                    await ViewerClient.connect(base + "/ws", volume="missing")
            finally:
                await runner.cleanup()

        asyncio.run(scenario())

    def test_session_limit(self, tmp_path):
        async def scenario():
            runner, base = await start_service(make_volume_dir(tmp_path),
                                               max_sessions=1)
            try:
                async with await ViewerClient.connect(base + "/ws"):
                    with pytest.raises(ProtocolError, match="session_limit"):
                        await ViewerClient.connect(base + "/ws")
            finally:
                await runner.cleanup()

        asyncio.run(scenario())

    def test_volumes_endpoint(self, tmp_path):
        volume_dir = make_volume_dir(tmp_path)
        (volume_dir / "broken.meta").write_text("dims = nope\n")

        async def scenario():
            runner, base = await start_service(volume_dir)
            try:
                url = base.replace("ws://", "http://") + "/volumes"
                async with aiohttp.ClientSession() as http:
                    async with http.get(url) as resp:
                        assert resp.status == 200
                        entries = await resp.json()
                by_name = {e["name"]: e for e in entries}
                assert by_name["sphere"]["ok"] is True
                assert by_name["broken"]["ok"] is False
            finally:
                await runner.cleanup()

        asyncio.run(scenario())


class TestListVolumes:
    def test_metadata_matches_loader(self, tmp_path):
        from quiltcast import load_volume
        make_volume_dir(tmp_path)
        entries = list_volumes(tmp_path)
        assert len(entries) == 1
        info = entries[0]
        volume = load_volume(info.path)
        assert info.dims == volume.dims
        assert info.timepoints == volume.n_timepoints
        assert len(info.channel_names) == len(volume.channels)

    def test_empty_directory(self, tmp_path):
        assert list_volumes(tmp_path) == []

    def test_unreadable_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            list_volumes(tmp_path / "absent")


class TestSettingsMessages:
    def test_set_settings_changes_output_and_invalidates(self, tmp_path):
        async def scenario():
            runner, base = await start_service(make_volume_dir(tmp_path))
            try:
                async with await ViewerClient.connect(base + "/ws") as client:
                    await client.set_camera(**CAMERA)
                    first = await client.await_generation()
                    bright = client.quilt(first).pixels.copy()
                    # raising the low threshold culls the sphere interior
                    await client.set_settings(mode="mip", low=0.99, high=1.0)
                    second = await client.await_generation(minimum=first + 1)
                    assert second > first
                    dimmed = client.quilt(second).pixels
                    assert not np.array_equal(bright, dimmed)
            finally:
                await runner.cleanup()

        asyncio.run(scenario())

    def test_set_rig_reshapes_the_stream(self, tmp_path):
        async def scenario():
            runner, base = await start_service(make_volume_dir(tmp_path))
            try:
                async with await ViewerClient.connect(base + "/ws") as client:
                    await client.set_rig(n_views=3, step_deg=2.0)
                    await client.set_camera(**CAMERA)
                    seen = set()
                    while len(seen) < 3:
                        _, tile = await client._next_message()
                        if tile is not None:
                            seen.add(tile.view)
                    assert seen == {0, 1, 2}
            finally:
                await runner.cleanup()

        asyncio.run(scenario())
