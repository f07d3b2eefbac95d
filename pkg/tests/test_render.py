import math

import numpy as np
import pytest
import shapely
from hypothesis import assume, given, settings, strategies as st
from shapely.geometry import box

from synthcity.errors import InvalidFov
from synthcity.mesh import Label, LabeledMesh
from synthcity.render import (DEFAULT_GSD, DEFAULT_IMAGE_PX, IdBuffer, extract_mask, gsd, plan_camera,
                              rasterize, render_tile, render_tiles)

from conftest import box_mesh, center_count


# camera

def test_perspective_altitude():
    cam = plan_camera(0.3, 572, "perspective", 10.0)
    assert cam.height_m == pytest.approx(171.6 / (2 * math.tan(math.radians(5))), rel=1e-12)
    assert cam.height_m == pytest.approx(980.7, abs=0.05)


def test_orthographic_footprint_and_defaults():
    cam = plan_camera(0.3, 572)
    assert cam.mode == "orthographic"
    assert cam.footprint_m == pytest.approx(171.6, rel=1e-12)
    assert (DEFAULT_IMAGE_PX, DEFAULT_GSD) == (572, 0.3)


@pytest.mark.parametrize("fov", [0.0, -5.0, 180.0, 200.0, None, float("nan")])
def test_invalid_fov(fov):
    with pytest.raises(InvalidFov):
        plan_camera(0.3, 572, "perspective", fov)


def test_bad_camera_args():
    with pytest.raises(ValueError):
        plan_camera(0.0, 572)
    with pytest.raises(ValueError):
        plan_camera(0.3, 572, "fisheye")


@given(st.floats(0.01, 5.0), st.integers(1, 4096), st.floats(0.01, 179.99))
def test_gsd_round_trip(g, W, fov):
    for mode in ("perspective", "orthographic"):
        cam = plan_camera(g, W, mode, fov if mode == "perspective" else None)
        assert gsd(cam) == pytest.approx(g, rel=1e-9)


# masks

def test_extract_mask_examples():
    rng = np.random.default_rng(0)
    classes = np.full((100, 100), int(Label.GROUND), np.uint8)
    assert not extract_mask(classes).any()
    flat = classes.reshape(-1)
    pos = rng.choice(flat.size, 4000, replace=False)
    flat[pos[:2500]] = Label.BUILDING
    flat[pos[2500:]] = Label.ROOF
    others = np.setdiff1d(np.arange(flat.size), pos)
    flat[others[:3000]] = Label.ROAD
    flat[others[3000:4000]] = Label.VEGETATION
    inst = rng.integers(0, 50, (100, 100)).astype(np.int32)
    m = extract_mask(IdBuffer(classes, inst))
    assert set(np.unique(m)) == {0, 255}
    assert np.count_nonzero(m) == 4000
    perm = rng.permutation(50).astype(np.int32)
    assert np.array_equal(extract_mask(IdBuffer(classes, perm[inst])), m)


def test_empty_scene_is_all_ground():
    cam = plan_camera(0.3, 64, center_xy=(10, 10))
    rgb, ids = render_tile(LabeledMesh.empty(), cam)
    assert rgb.shape == (64, 64, 3) and rgb.dtype == np.uint8
    assert np.all(ids.classes == Label.GROUND)
    assert not extract_mask(ids).any()


def test_ground_plane_only():
    cam = plan_camera(0.3, 80, center_xy=(0, 0))
    tile = render_tile(box_mesh([], ground=(-50, -50, 50, 50)), cam)
    assert np.all(tile.ids.classes == Label.GROUND) and not tile.mask.any()


# pixel counts

def _box_tile(boxes, W=100, g=0.3, center=(0.0, 0.0), **kw):
    cam = plan_camera(g, W, center_xy=center, **kw)
    return cam, render_tile(box_mesh(boxes, ground=(-500, -500, 500, 500)), cam)


def test_centered_box_pixel_count_is_exact():
    cam, tile = _box_tile([(-5, -5, 5, 5, 12.0)])
    n = np.count_nonzero(tile.mask)
    assert n == center_count([(-5, -5, 5, 5, 12.0)], cam) == 34 * 34
    # inside the perimeter/g boundary band around 100 / 0.09
    assert abs(n - 100 / 0.09) <= 40 / 0.3


@pytest.mark.xfail(strict=True, reason="a centred 10 m box covers 34x34 pixel centres at g=0.3 (1156), "
                                       "4.0% above 1111.1; see the decisions ledger")
def test_centered_box_within_two_percent_of_area_over_g2():
    _, tile = _box_tile([(-5, -5, 5, 5, 12.0)])
    assert abs(np.count_nonzero(tile.mask) - 100 / 0.09) <= 0.02 * 100 / 0.09


def test_mask_matches_id_classes():
    _, tile = _box_tile([(-12, -3, 2, 9, 6.0), (4, -10, 11, -1, 20.0)])
    m = tile.mask
    n_bld = np.isin(tile.ids.classes, [Label.BUILDING, Label.ROOF]).sum()
    assert np.count_nonzero(m) == n_bld
    assert set(np.unique(m)) <= {0, 255}


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(-14, 10), st.floats(-14, 10), st.floats(0.5, 12), st.floats(0.5, 12),
                          st.floats(1, 40)), min_size=1, max_size=4))
def test_pixel_count_against_center_oracle(specs):
    boxes = [(x, y, min(x + w, 15), min(y + d, 15), h) for x, y, w, d, h in specs]
    # an edge exactly on a row or column of pixel centres is a float tie that
    # world-space and pixel-space arithmetic may round either way
    t = (np.array([b[:4] for b in boxes]) + 15) / 0.3 - 0.5
    assume(np.all(np.abs(t - np.round(t)) > 1e-6))
    cam, tile = _box_tile(boxes)
    n = np.count_nonzero(tile.mask)
    assert n == center_count(boxes, cam)
    fp = shapely.union_all([box(*b[:4]) for b in boxes]).intersection(box(*cam.bounds))
    assert abs(n - fp.area / 0.09) <= fp.length / 0.3 + 4


def test_north_up_orientation():
    # a box in the north-east quarter lands in the top-right of the image
    _, tile = _box_tile([(3, 3, 12, 12, 5.0)])
    rows, cols = np.nonzero(tile.mask)
    assert rows.max() < 50 and cols.min() >= 50


# depth

def test_taller_box_wins_overlap():
    boxes = [(-10, -10, 4, 4, 5.0), (-4, -4, 10, 10, 15.0)]
    cam, tile = _box_tile(boxes)
    c = (np.arange(100) + 0.5) * 0.3 - 15
    X, Y = np.meshgrid(c, c[::-1])
    overlap = (X >= -4) & (X <= 4) & (Y >= -4) & (Y <= 4)
    assert overlap.sum() > 0
    assert np.all(tile.ids.instance[overlap] == 2)
    only_low = (X >= -10) & (X < -4.2) & (Y >= -10) & (Y < -4.2)
    assert np.all(tile.ids.instance[only_low] == 1)
    # same answer regardless of triangle order
    swapped = render_tile(box_mesh(boxes[::-1], ground=(-500, -500, 500, 500)), cam)
    assert np.all(swapped.ids.instance[overlap] == 1)


def test_taller_box_wins_in_perspective():
    boxes = [(-10, -10, 4, 4, 5.0), (-4, -4, 10, 10, 15.0)]
    cam, tile = _box_tile(boxes, mode="perspective", fov_deg=10.0)
    assert tile.ids.instance[50, 50] == 2


def _oracle(uv, keys, W, H):
    """Per-pixel brute force: barycentric inside test and interpolated key."""
    best = np.full((H, W), -np.inf)
    idx = np.full((H, W), -1)
    for j in range(H):
        for i in range(W):
            p = np.array([i + 0.5, j + 0.5])
            for t in range(len(uv)):
                a, b, c = uv[t]
                m = np.array([b - a, c - a]).T
                if abs(np.linalg.det(m)) < 1e-9:
                    continue
                l1, l2 = np.linalg.solve(m, p - a)
                l0 = 1 - l1 - l2
                if min(l0, l1, l2) < -1e-9:
                    continue
                k = l0 * keys[t, 0] + l1 * keys[t, 1] + l2 * keys[t, 2]
                if k > best[j, i]:
                    best[j, i], idx[j, i] = k, t
    return best, idx


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_rasterizer_depth_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    W = H = 12
    uv = rng.uniform(-2, 14, (2, 3, 2))
    keys = rng.uniform(0, 50, (2, 3))
    zbuf, idx = rasterize(uv, keys, W, H)
    best, ref = _oracle(uv, keys, W, H)
    covered = np.isfinite(best)
    assert np.array_equal(np.isfinite(zbuf), covered)
    assert np.allclose(zbuf[covered], best[covered], rtol=1e-9, atol=1e-9)
    # winners agree wherever the two depths are not tied
    if covered.any():
        other = np.full((H, W), -np.inf)
        for t in range(2):
            _, single = _oracle(uv[t:t + 1], keys[t:t + 1], W, H)
            z1, _ = rasterize(uv[t:t + 1], keys[t:t + 1], W, H)
            mask = (single == 0) & (ref != t)
            other[mask] = z1[mask]
        tied = np.isfinite(other) & (np.abs(best - np.where(np.isfinite(other), other, 0)) <= 1e-6)
        clear = covered & ~tied
        assert np.array_equal(idx[clear], ref[clear])


def test_rasterizer_edge_samples_are_inside():
    # a right triangle whose hypotenuse passes exactly through pixel centres
    uv = np.array([[[0.5, 0.5], [3.5, 0.5], [0.5, 3.5]]])
    _, idx = rasterize(uv, np.zeros((1, 3)), 4, 4)
    assert (idx == 0).sum() == 10


# scene rendering

def test_render_small_scene(small_scene):
    cam = plan_camera(0.3, 200, center_xy=(200, 200))
    tile = render_tile(small_scene, cam)
    assert tile.rgb.shape == (200, 200, 3)
    assert tile.meta["style_id"] == "b" and tile.meta["warnings"] == []
    assert np.count_nonzero(tile.mask) == np.isin(tile.ids.classes, [Label.BUILDING, Label.ROOF]).sum()
    assert len(np.unique(tile.ids.classes)) >= 3


def test_missed_extent_warns(small_scene):
    tile = render_tile(small_scene, plan_camera(0.3, 32, center_xy=(5000, 5000)))
    assert tile.meta["warnings"]
    assert np.all(tile.ids.classes == Label.GROUND)


def test_workers_do_not_change_output(small_scene):
    cams = [plan_camera(0.3, 96, center_xy=(x, y)) for x, y in [(100, 100), (250, 120), (300, 300)]]
    one = render_tiles(small_scene, cams, workers=1)
    many = render_tiles(small_scene, cams, workers=3)
    for a, b in zip(one, many):
        assert a.rgb.tobytes() == b.rgb.tobytes()
        assert a.ids == b.ids


def test_shadows_darken_rgb_only():
    boxes = [(-3, -3, 3, 3, 20.0)]
    _, plain = _box_tile(boxes)
    _, shaded = _box_tile(boxes, shadows=True)
    assert plain.ids == shaded.ids
    assert shaded.rgb.astype(int).sum() < plain.rgb.astype(int).sum()
    # the roof itself is lit
    assert np.array_equal(shaded.rgb[50, 50], plain.rgb[50, 50])
