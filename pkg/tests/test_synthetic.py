from __future__ import annotations

import numpy as np
import pytest

from quiltcast import SyntheticSpec, VolumeError, load_volume, make_synthetic, save_volume
from quiltcast.synthetic import helix_points

from oracles import count_voxels_near_points


def test_sphere_center_and_outside():
    spec = SyntheticSpec(shape="sphere", dims=(16, 16, 16), radius=4.0, falloff=1.0)
    volume = make_synthetic(spec)
    s = volume.channels[0].samples
    assert s[8, 8, 8] == 1.0  # voxel containing the center
    # any voxel farther than radius + falloff is zero
    Z, Y, X = np.meshgrid(*(np.arange(16) + 0.5,) * 3, indexing="ij")
    d = np.sqrt((X - 8.0) ** 2 + (Y - 8.0) ** 2 + (Z - 8.0) ** 2)
    assert np.all(s[d > 5.0] == 0.0)
    # falloff band is strictly between 0 and 1
    band = s[(d > 4.2) & (d < 4.8)]
    assert band.size and np.all((band > 0.0) & (band < 1.0))


def test_sphere_hard_edge_is_binary():
    volume = make_synthetic(SyntheticSpec(shape="sphere", dims=(8, 8, 8), radius=3.0))
    values = np.unique(volume.channels[0].samples)
    assert set(values.tolist()) <= {0.0, 1.0}


def test_slab_bounds():
    spec = SyntheticSpec(shape="slab", dims=(8, 8, 8), axis=2,
                         low_frac=0.25, high_frac=0.5)
    s = make_synthetic(spec).channels[0].samples
    assert np.all(s[2:4] == 1.0)   # z in [2, 4) has centers 2.5, 3.5
    assert np.all(s[0] == 0.0) and np.all(s[5:] == 0.0)


def test_helix_count_matches_brute_force():
    spec = SyntheticSpec(shape="helix-bundle", dims=(24, 24, 24), fibers=2,
                         tube_radius=2.5, turns=1.5)
    volume = make_synthetic(spec)
    produced = int(np.count_nonzero(volume.channels[0].samples))
    expected = count_voxels_near_points(spec.dims, helix_points(spec), 2.5)
    assert produced == expected
    assert produced > 0


def test_branching_is_nonempty_and_bounded():
    volume = make_synthetic(SyntheticSpec(shape="branching", dims=(32, 32, 32)))
    s = volume.channels[0].samples
    assert np.count_nonzero(s) > 0
    assert s.max() == 1.0


def test_deterministic():
    spec = SyntheticSpec(shape="branching", dims=(24, 24, 24), seed=11)
    a = make_synthetic(spec).channels[0].samples
    b = make_synthetic(spec).channels[0].samples
    np.testing.assert_array_equal(a, b)


def test_unknown_shape():
    with pytest.raises(VolumeError, match="unknown shape"):
        make_synthetic(SyntheticSpec(shape="torus"))


def test_bad_dims():
    with pytest.raises(VolumeError, match="dims"):
        make_synthetic(SyntheticSpec(shape="sphere", dims=(0, 4, 4)))


def test_synthetic_round_trips_to_disk(tmp_path):
    spec = SyntheticSpec(shape="sphere", dims=(12, 12, 12), radius=4.0, falloff=2.0)
    volume = make_synthetic(spec)
    again = load_volume(save_volume(volume, tmp_path / "s.meta"))
    np.testing.assert_array_equal(volume.channels[0].samples,
                                  again.channels[0].samples)
