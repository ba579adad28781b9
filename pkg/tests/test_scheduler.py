from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quiltcast import (Camera, Orthographic, QuiltLayout, RenderSession,
                       RenderSettings, SyntheticSpec, ViewRig, ViewUpdate,
                       Volume, VolumeChannel, frames_equal, make_synthetic,
                       one_shot_quilt, render, run_progressive,
                       turntable_cameras, view_order)

from oracles import largest_unscheduled_run


@pytest.fixture
def volume():
    return make_synthetic(SyntheticSpec(shape="sphere", dims=(12, 12, 12), radius=4.0))


@pytest.fixture
def timelapse():
    base = np.zeros((4, 4, 4), dtype=np.float32)
    moved = np.zeros((4, 4, 4), dtype=np.float32)
    base[1, 1, 1] = 1.0
    moved[2, 2, 2] = 1.0
    ch = VolumeChannel(dims=(4, 4, 4), spacing=(1, 1, 1), samples=base)
    return Volume(channels=(ch,), timepoints=((base,), (moved,)))


def make_session(volume, n_views=5, tile=24) -> RenderSession:
    camera = Camera(rotation_center=volume.center, distance=3.0 * volume.diagonal,
                    projection=Orthographic(view_height=volume.extent[1]),
                    aspect=1.0)
    rig = ViewRig(n_views=n_views, step_deg=2.0)
    layout = QuiltLayout(columns=3, rows=2, tile_width=tile, tile_height=tile,
                         n_views=n_views)
    return RenderSession(volume, camera, rig, RenderSettings(mode="mip"),
                         layout=layout)


def render_update(session: RenderSession, view: int, generation: int | None = None,
                  camera_override=None) -> ViewUpdate:
    generation = session.generation if generation is None else generation
    cameras = turntable_cameras(camera_override or session.camera, session.rig)
    frame = render(session.volume.at_timepoint(session.current_timepoint),
                   cameras[view], session.settings, session.tile_size())
    return ViewUpdate(session.session_id, view, generation, frame)


class TestViewOrder:
    def test_singleton(self):
        assert view_order(1) == [0]

    def test_eight(self):
        assert view_order(8) == [0, 4, 2, 6, 1, 5, 3, 7]

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            view_order(0)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 200))
    def test_is_permutation(self, n):
        assert sorted(view_order(n)) == list(range(n))

    def test_dispersion_first_eight_of_45(self):
        first = view_order(45)[:8]
        gap = largest_unscheduled_run(first, 45)
        assert gap <= int(np.ceil(45 / 8)) + 1


class TestGenerations:
    def test_two_updates_bump_twice(self, volume):
        session = make_session(volume)
        g0 = session.generation
        g1 = session.update_camera(session.camera)
        g2 = session.update_camera(session.camera)
        assert (g1, g2) == (g0 + 1, g0 + 2)

    def test_identical_camera_still_bumps(self, volume):
        session = make_session(volume)
        before = session.generation
        assert session.update_camera(session.camera) == before + 1

    def test_stale_update_rejected_quilt_unchanged(self, volume):
        session = make_session(volume)
        old = render_update(session, 0)
        session.update_camera(session.camera)
        quilt_before = session.quilt.pixels.copy()
        assert session.complete_view(old) is False
        np.testing.assert_array_equal(session.quilt.pixels, quilt_before)
        assert session.view_status[0] is None

    def test_accepted_update_lands_in_quilt(self, volume):
        session = make_session(volume)
        update = render_update(session, 2)
        assert session.complete_view(update) is True
        assert session.view_status[2] == session.generation
        x, y = session.layout.tile_origin(2)
        np.testing.assert_array_equal(
            session.quilt.pixels[y : y + 24, x : x + 24], update.frame.pixels)

    def test_duplicate_completion_idempotent(self, volume):
        session = make_session(volume)
        update = render_update(session, 1)
        assert session.complete_view(update)
        before = session.quilt.pixels.copy()
        assert session.complete_view(update)
        np.testing.assert_array_equal(session.quilt.pixels, before)

    def test_wrong_session_rejected(self, volume):
        session = make_session(volume)
        update = render_update(session, 0)
        other = ViewUpdate("someone-else", 0, update.generation, update.frame)
        with pytest.raises(ValueError, match="session"):
            session.complete_view(other)

    def test_wrong_size_rejected(self, volume):
        from quiltcast import Frame
        session = make_session(volume)
        bad = ViewUpdate(session.session_id, 0, session.generation,
                         Frame.filled(3, 3))
        with pytest.raises(ValueError, match="tile"):
            session.complete_view(bad)

    def test_view_index_out_of_range(self, volume):
        session = make_session(volume)
        update = render_update(session, 0)
        bad = ViewUpdate(session.session_id, 99, update.generation, update.frame)
        with pytest.raises(IndexError):
            session.complete_view(bad)


class TestConvergence:
    def test_any_completion_order_matches_one_shot(self, volume):
        session = make_session(volume)
        reference, _ = one_shot_quilt(volume, session.camera, session.rig,
                                      session.settings, session.layout)
        rng = np.random.default_rng(0)
        for _ in range(3):
            session.update_camera(session.camera)
            order = rng.permutation(session.rig.n_views)
            for view in order:
                assert session.complete_view(render_update(session, int(view)))
            np.testing.assert_array_equal(session.quilt.pixels, reference.pixels)

    def test_update_then_full_completion_matches_new_camera(self, volume):
        from dataclasses import replace
        session = make_session(volume)
        for view in session.pending_views():
            session.complete_view(render_update(session, view))
        new_camera = replace(session.camera, azimuth_deg=30.0)
        session.update_camera(new_camera)
        for view in session.pending_views():
            session.complete_view(render_update(session, view))
        reference, _ = one_shot_quilt(volume, new_camera, session.rig,
                                      session.settings, session.layout)
        np.testing.assert_array_equal(session.quilt.pixels, reference.pixels)

    def test_mixed_generations_never_mix_within_tile(self, volume):
        # randomized interleaving of updates and completions: every quilt tile
        # is always exactly some generation's render, and current-generation
        # coverage only grows between camera updates
        from dataclasses import replace
        session = make_session(volume, n_views=4)
        rng = np.random.default_rng(1)
        cams = {0: session.camera}
        renders = {}

        def frame_for(gen, view):
            if (gen, view) not in renders:
                renders[(gen, view)] = render_update(session, view, generation=gen,
                                                     camera_override=cams[gen])
            return renders[(gen, view)]

        coverage = 0
        for step in range(60):
            action = rng.random()
            if action < 0.25:
                cam = replace(session.camera, azimuth_deg=float(rng.integers(0, 30)))
                gen = session.update_camera(cam)
                cams[gen] = cam
                coverage = 0
            else:
                gen = int(rng.integers(max(0, session.generation - 2),
                                       session.generation + 1))
                if gen not in cams:
                    continue
                view = int(rng.integers(0, 4))
                accepted = session.complete_view(frame_for(gen, view))
                assert accepted == (gen == session.generation)
            done_now = sum(1 for s in session.view_status if s == session.generation)
            assert done_now >= coverage
            coverage = done_now
            # every tile equals a frame rendered under exactly one generation
            for view in range(4):
                x, y = session.layout.tile_origin(view)
                tile = session.quilt.pixels[y : y + 24, x : x + 24]
                blank = np.zeros_like(tile)
                blank[..., 3] = 255
                candidates = [frame_for(g, view).frame.pixels for g in cams] + [blank]
                assert any(np.array_equal(tile, c) for c in candidates)


class TestTimepoints:
    def test_advance_out_of_range_untouched(self, timelapse):
        session = make_session(timelapse)
        gen = session.generation
        tp = session.current_timepoint
        with pytest.raises(IndexError):
            session.advance_timepoint(2)
        assert session.generation == gen and session.current_timepoint == tp

    def test_single_timepoint_readvance_is_identical(self, volume):
        session = make_session(volume)
        for view in session.pending_views():
            session.complete_view(render_update(session, view))
        before = session.quilt.pixels.copy()
        gen = session.advance_timepoint(0)
        assert gen == session.generation
        assert session.pending_views()  # views re-render
        for view in session.pending_views():
            session.complete_view(render_update(session, view))
        np.testing.assert_array_equal(session.quilt.pixels, before)

    def test_timepoint_round_trip_restores_quilt(self, timelapse):
        session = make_session(timelapse)

        def complete_all():
            for view in session.pending_views():
                session.complete_view(render_update(session, view))

        complete_all()
        t0_quilt = session.quilt.pixels.copy()
        session.advance_timepoint(1)
        complete_all()
        t1_quilt = session.quilt.pixels.copy()
        assert not np.array_equal(t0_quilt, t1_quilt)
        session.advance_timepoint(0)
        complete_all()
        np.testing.assert_array_equal(session.quilt.pixels, t0_quilt)


class TestRunProgressive:
    def test_synchronous_run_matches_one_shot(self, volume):
        session = make_session(volume)
        updates = []
        run_progressive(session, on_update=lambda u: updates.append(u))
        assert session.done()
        reference, _ = one_shot_quilt(volume, session.camera, session.rig,
                                      session.settings, session.layout)
        np.testing.assert_array_equal(session.quilt.pixels, reference.pixels)
        assert [u.view_index for u in updates] == view_order(session.rig.n_views)

    def test_invalidation_mid_run_converges_to_final_camera(self, volume):
        from dataclasses import replace
        session = make_session(volume)
        final = replace(session.camera, azimuth_deg=25.0)
        fired = []

        def disturb(update):
            if not fired:
                fired.append(True)
                session.update_camera(final)

        run_progressive(session, on_update=disturb)
        assert session.done()
        reference, _ = one_shot_quilt(volume, final, session.rig,
                                      session.settings, session.layout)
        np.testing.assert_array_equal(session.quilt.pixels, reference.pixels)

    def test_worker_pool_run_matches_one_shot(self, volume):
        session = make_session(volume)
        run_progressive(session, workers=3)
        assert session.done()
        reference, _ = one_shot_quilt(volume, session.camera, session.rig,
                                      session.settings, session.layout)
        np.testing.assert_array_equal(session.quilt.pixels, reference.pixels)


class TestInterleaveRefresh:
    def test_native_frame_tracks_accepted_views(self, volume):
        from quiltcast import LenticularCalibration, interleave, Frame
        calib = LenticularCalibration(screen_width=24, screen_height=24, pitch=3.1,
                                      n_views=5)
        camera = Camera(rotation_center=volume.center, distance=3.0 * volume.diagonal,
                        projection=Orthographic(view_height=volume.extent[1]))
        layout = QuiltLayout(columns=3, rows=2, tile_width=24, tile_height=24,
                             n_views=5)
        session = RenderSession(volume, camera, ViewRig(n_views=5, step_deg=2.0),
                                RenderSettings(mode="mip"), layout=layout,
                                calibration=calib)
        assert session.native is None
        session.complete_view(render_update(session, 2))
        blank = Frame.filled(24, 24, (0, 0, 0, 255))
        views = [blank] * 5
        views[2] = session.views[2]
        assert frames_equal(session.native, interleave(views, calib))


class TestRigReshape:
    def test_stale_update_from_old_rig_discards_silently(self, volume):
        # a view render in flight across a rig shrink must not blow up on its
        # now-out-of-range view index
        session = make_session(volume, n_views=5)
        in_flight = render_update(session, 4)
        session.update_rig(ViewRig(n_views=3, step_deg=2.0),
                           QuiltLayout(columns=3, rows=1, tile_width=24,
                                       tile_height=24, n_views=3))
        assert session.complete_view(in_flight) is False
        for view in session.pending_views():
            session.complete_view(render_update(session, view))
        assert session.done()
