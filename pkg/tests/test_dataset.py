import json
from collections import Counter
from itertools import islice

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from synthcity import dataset as ds
from synthcity.dataset import (BatchStream, DatasetManifest, SweepSpec, equal_split, export_tiles, file_digest,
                               load_manifest, make_style_pool, mixed_batch_stream, subsample, sweep,
                               training_schedule)
from synthcity.errors import EmptySubsample, ExportError
from synthcity.render import plan_camera


# sweeps

def test_sweep_examples():
    assert len(sweep(SweepSpec(1000.0, 171.6))) == 25
    assert len(sweep(SweepSpec(343.2, 171.6, 85.8))) == 9
    assert sweep(SweepSpec(100.0, 171.6)) == []


def test_sweep_order_is_row_major_from_south():
    cs = sweep(SweepSpec((400.0, 300.0), 100.0))
    assert [(c.row, c.col) for c in cs[:5]] == [(0, 0), (0, 1), (0, 2), (0, 3), (1, 0)]
    assert cs[0].x == 50.0 and cs[0].y == 50.0
    assert not any(c.edge for c in cs)


def test_clipped_cover_marks_edges():
    cs = sweep(SweepSpec(1000.0, 171.6, policy="clipped-cover"))
    assert len(cs) == 36
    assert sum(c.edge for c in cs) == 11
    xs = max(c.x for c in cs) + 171.6 / 2
    assert xs >= 1000.0


@settings(max_examples=200)
@given(st.floats(10, 3000), st.floats(10, 3000), st.floats(5, 400), st.floats(1.0, 3.0))
def test_interior_tiles_are_disjoint_and_cover(ex, ey, F, k):
    stride = F * k
    cs = sweep(SweepSpec((ex, ey), F, stride))
    nx = len({c.col for c in cs})
    ny = len({c.row for c in cs})
    assert len(cs) == nx * ny
    for c in cs:
        assert c.x - F / 2 >= -1e-9 and c.x + F / 2 <= ex + 1e-6
        assert c.y - F / 2 >= -1e-9 and c.y + F / 2 <= ey + 1e-6
    if cs:
        # one more column or row would leave the extent
        assert max(c.x for c in cs) + stride + F / 2 > ex - 1e-6
        xs = sorted({c.x for c in cs})
        assert all(b - a >= F - 1e-9 for a, b in zip(xs, xs[1:]))
    if k == 1.0:
        # abutting tiles fill the largest whole-tile block [0, nx*F] x [0, ny*F]
        # (the sweep tolerates 1e-9 of float noise in exact fits)
        assert (nx, ny) == (int(ex / F + 1e-9), int(ey / F + 1e-9)) or not cs
        xs = sorted({c.x for c in cs})
        assert all(b - a == pytest.approx(F) for a, b in zip(xs, xs[1:]))


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(100.0, 0.0)
    with pytest.raises(ValueError):
        SweepSpec(100.0, 10.0, policy="spiral")


# export

@pytest.fixture(scope="module")
def exported(small_scene, tmp_path_factory):
    out = tmp_path_factory.mktemp("export")
    cam = plan_camera(0.3, 100)
    m = export_tiles(small_scene, SweepSpec(400.0, cam.footprint_m, 80.0), out, cam)
    return m, out, cam


def test_export_counts(exported):
    m, out, _ = exported
    assert len(m) == 25
    assert len(list(out.glob("rgb/*.png"))) + len(list(out.glob("mask/*.png"))) == 50
    assert (out / "manifest.jsonl").is_file()


def test_manifest_integrity(exported):
    m, out, cam = exported
    loaded = load_manifest(out)
    assert loaded.tile_ids == m.tile_ids == sorted(m.tile_ids)
    assert len(set(loaded.tile_ids)) == 25
    for r in loaded.records:
        rgb = np.asarray(Image.open(loaded.path(r, "rgb")))
        mask = np.asarray(Image.open(loaded.path(r, "mask")))
        assert rgb.shape == (100, 100, 3) and mask.shape == (100, 100)
        assert set(np.unique(mask)) <= {0, 255}
        assert r["gsd_m"] == 0.3 and r["image_px"] == 100
        assert r["style_id"] == "b" and r["world_seed"] == 11
    head = json.loads((out / "manifest.jsonl").read_text().splitlines()[0])["header"]
    assert head["n_records"] == 25 and head["gsd_m"] == 0.3


def test_tile_id_format(exported):
    m, _, _ = exported
    assert m.tile_ids[0] == "b-000000000000000b-r000-c000"


def test_export_is_reproducible(exported, small_scene, tmp_path):
    m, out, cam = exported
    again = export_tiles(small_scene, SweepSpec(400.0, cam.footprint_m, 80.0), tmp_path, cam)
    assert file_digest(tmp_path / "manifest.jsonl") == file_digest(out / "manifest.jsonl")
    for r in again.records:
        for k in ("rgb", "mask"):
            assert file_digest(tmp_path / r[k]) == file_digest(out / r[k])


def test_export_cleans_up_on_io_error(small_scene, tmp_path, monkeypatch):
    real = ds._save_png
    calls = []

    def flaky(arr, path):
        calls.append(path)
        if len(calls) == 5:
            raise OSError("disk full")
        real(arr, path)

    monkeypatch.setattr(ds, "_save_png", flaky)
    cam = plan_camera(0.3, 40)
    with pytest.raises(ExportError):
        export_tiles(small_scene, SweepSpec(400.0, cam.footprint_m, 100.0), tmp_path, cam)
    assert not list(tmp_path.rglob("*.png"))
    assert not (tmp_path / "manifest.jsonl").exists()


# pools

def test_small_pool(tmp_path):
    cam = plan_camera(0.3, 60)
    pool = make_style_pool(["b", "h"], 3, 5, tmp_path, extent_m=200.0, camera=cam)
    counts = Counter(r["style_id"] for r in pool.records)
    assert counts == {"b": 3, "h": 3}
    assert len(load_manifest(tmp_path)) == 6


def test_pool_single_tile(tmp_path):
    pool = make_style_pool(["c"], 1, 0, tmp_path, extent_m=300.0, camera=plan_camera(0.3, 50))
    assert len(pool) == 1


def test_pool_spans_several_worlds(tmp_path):
    # a 200 m world holds one 171.6 m tile, so two tiles need two worlds
    cam = plan_camera(0.3, 572)
    pool = make_style_pool(["i"], 2, 0, tmp_path, extent_m=200.0, camera=cam)
    assert len(pool) == 2
    assert len({r["world_seed"] for r in pool.records}) == 2
    with pytest.raises(ExportError):
        make_style_pool(["i"], 3, 0, tmp_path / "x", extent_m=200.0, camera=cam, max_worlds=2)


def test_equal_split():
    assert equal_split(2108, 9) == (234, 2106)
    assert equal_split(1640, 6) == (273, 1638)


# subsampling

def _fake(n):
    recs = [{"tile_id": f"t{i:05d}", "rgb": f"rgb/t{i:05d}.png", "mask": f"mask/t{i:05d}.png",
             "style_id": "a", "gsd_m": 0.3, "image_px": 572} for i in range(n)]
    return DatasetManifest("fake", "0", recs)


def test_subsample_examples():
    m = _fake(1640)
    assert len(subsample(m, 0.5, 1)) == 820
    assert subsample(m, 1.0, 3).tile_ids == m.tile_ids
    with pytest.raises(EmptySubsample):
        subsample(_fake(3), 0.2, 0)
    with pytest.raises(ValueError):
        subsample(m, 0.0, 0)


@given(st.integers(1, 500), st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.integers(0, 2**32))
def test_subsample_nested(n, f1, f2, seed):
    f1, f2 = sorted((f1, f2))
    m = _fake(n)
    try:
        small = set(subsample(m, f1, seed).tile_ids)
    except EmptySubsample:
        small = set()
    large = subsample(m, f2, seed) if int(f2 * n) else None
    if large is not None:
        assert small <= set(large.tile_ids)
        assert len(large) == int(f2 * n)
        assert len(set(large.tile_ids)) == len(large)


def test_subsample_is_seeded():
    m = _fake(300)
    assert subsample(m, 0.3, 7).tile_ids == subsample(m, 0.3, 7).tile_ids
    assert subsample(m, 0.3, 7).tile_ids != subsample(m, 0.3, 8).tile_ids


# batches

def test_default_batches_are_six_plus_one():
    real = [f"r{i}" for i in range(40)]
    synth = [f"s{i}" for i in range(9)]
    for r, s in islice(mixed_batch_stream(real, synth), 500):
        assert len(r) == 6 and len(s) == 1
        assert set(r) <= set(real) and set(s) <= set(synth)
        assert len(set(r)) == 6


def test_twelve_real_ids_two_batches():
    real = [f"r{i}" for i in range(12)]
    batches = list(islice(mixed_batch_stream(real, ["s0", "s1"], BatchStream(seed=4)), 2))
    seen = Counter(x for r, _ in batches for x in r)
    assert sorted(seen) == sorted(real) and set(seen.values()) == {1}


@settings(max_examples=50)
@given(st.integers(6, 60), st.integers(1, 20), st.integers(1, 400), st.integers(0, 2**32))
def test_epoch_balance(n_real, n_synth, n_batches, seed):
    real = list(range(n_real))
    synth = [f"s{i}" for i in range(n_synth)]
    rc, sc = Counter(), Counter()
    for r, s in islice(mixed_batch_stream(real, synth, BatchStream(seed=seed)), n_batches):
        assert len(r) == 6 and len(s) == 1 and len(set(r)) == 6
        rc.update(r)
        sc.update(s)
    counts = [rc[i] for i in real]
    assert max(counts) - min(counts) <= 1
    scounts = [sc[i] for i in synth]
    assert max(scounts) - min(scounts) <= 1


def test_stream_determinism_and_errors():
    real = list(range(20))
    a = list(islice(mixed_batch_stream(real, [1, 2], BatchStream(seed=9)), 30))
    b = list(islice(mixed_batch_stream(real, [1, 2], BatchStream(seed=9)), 30))
    assert a == b
    with pytest.raises(ValueError):
        mixed_batch_stream([], [1])
    with pytest.raises(ValueError):
        mixed_batch_stream([1, 2, 3], [1])
    with pytest.raises(ValueError):
        BatchStream(7, 5, 1)


def test_custom_composition():
    spec = BatchStream(batch_size=4, real_per_batch=2, synth_per_batch=2, seed=1)
    for r, s in islice(mixed_batch_stream(list("abcde"), list("xyz"), spec), 50):
        assert len(r) == 2 and len(s) == 2


# schedule

def test_schedule_examples():
    s = training_schedule("deeplabv3", False)
    assert s.stage1.lr == 5e-5 and s.stage2 is None
    s = training_schedule("unet", True)
    assert s.stage1.lr == 1e-4 and s.stage1.iterations == 80_000
    assert s.stage2.iterations == 50_000 and s.stage2.lr == 2e-5 and s.stage2.data == "real"
    for model in ("unet", "deeplabv3"):
        st1 = training_schedule(model, True).stage1
        assert st1.lr_drop_iteration == 50_000 < st1.iterations
        assert st1.drop_factor == 10
    doc = training_schedule("unet", True).to_dict()
    assert json.loads(json.dumps(doc))["stages"][1]["lr"] == 2e-5
    with pytest.raises(ValueError):
        training_schedule("resnet", True)
