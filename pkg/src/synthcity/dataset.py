"""
Tile datasets: camera sweeps, export to PNG + JSON-lines manifests,
multi-style pools, nested subsampling, mixed real/synthetic batch streams
and the fine-tuning schedule.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np
from PIL import Image

from .errors import EmptySubsample, ExportError
from .render import DEFAULT_GSD, DEFAULT_IMAGE_PX, CameraSpec, plan_camera, render_tile
from .rng import derive_seed, stream

log = logging.getLogger(__name__)

POLICIES = ("interior-only", "clipped-cover")
MANIFEST_NAME = "manifest.jsonl"
# the fields of a tile record, in the order they are written
RECORD_FIELDS = ("tile_id", "rgb", "mask", "style_id", "world_seed", "bounds", "gsd_m", "image_px",
                 "edge", "building_px")


# sweeps

@dataclass(frozen=True)
class SweepSpec:
    extent_m: tuple
    tile_footprint_m: float = DEFAULT_IMAGE_PX * DEFAULT_GSD
    stride_m: Optional[float] = None  # None: equal to the footprint
    policy: str = "interior-only"

    def __post_init__(self):
        ext = tuple(float(v) for v in np.broadcast_to(np.asarray(self.extent_m, float), (2,)))
        object.__setattr__(self, "extent_m", ext)
        if self.stride_m is None:
            object.__setattr__(self, "stride_m", float(self.tile_footprint_m))
        if not self.tile_footprint_m > 0 or not self.stride_m > 0:
            raise ValueError("footprint and stride must be positive")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")


class Center(NamedTuple):
    x: float
    y: float
    row: int
    col: int
    edge: bool = False  # tile extends past the extent (clipped-cover only)


def _count(extent, footprint, stride, policy) -> int:
    span = (extent - footprint) / stride
    if policy == "interior-only":
        # tolerate float noise in exact fits such as 171.6 / 85.8
        return int(math.floor(span + 1e-9)) + 1 if extent >= footprint - 1e-9 else 0
    return max(0, int(math.ceil(span - 1e-9))) + 1


def sweep(spec: SweepSpec) -> list:
    """Row-major (south to north, then west to east) grid of tile centers."""
    F, s = spec.tile_footprint_m, spec.stride_m
    nx = _count(spec.extent_m[0], F, s, spec.policy)
    ny = _count(spec.extent_m[1], F, s, spec.policy)
    if nx == 0 or ny == 0:
        log.warning("extent %s is smaller than the %.1f m tile footprint; no tiles", spec.extent_m, F)
        return []
    out = []
    for r in range(ny):
        for c in range(nx):
            x0, y0 = c * s, r * s
            edge = x0 + F > spec.extent_m[0] + 1e-9 or y0 + F > spec.extent_m[1] + 1e-9
            out.append(Center(x0 + F / 2.0, y0 + F / 2.0, r, c, edge))
    return out


# manifests

@dataclass
class DatasetManifest:
    dataset_id: str
    params_hash: str = ""
    records: list = field(default_factory=list)
    root: Optional[str] = None  # directory the relative file paths resolve against

    def __len__(self):
        return len(self.records)

    @property
    def tile_ids(self) -> list:
        return [r["tile_id"] for r in self.records]

    def path(self, record, key="rgb") -> Path:
        return Path(self.root or ".") / record[key]

    def header(self) -> dict:
        gsd = sorted({r["gsd_m"] for r in self.records})
        size = sorted({r["image_px"] for r in self.records})
        return {"dataset_id": self.dataset_id, "params_hash": self.params_hash,
                "n_records": len(self.records),
                "gsd_m": gsd[0] if len(gsd) == 1 else gsd,
                "image_px": size[0] if len(size) == 1 else size}

    def check(self) -> None:
        """Raise ExportError if the manifest breaks its integrity invariants."""
        ids = self.tile_ids
        if len(set(ids)) != len(ids):
            raise ExportError("duplicate tile ids in manifest")
        if len({(r["gsd_m"], r["image_px"]) for r in self.records}) > 1:
            raise ExportError("records disagree on gsd or image size")

    def with_records(self, records, suffix="") -> "DatasetManifest":
        return DatasetManifest(self.dataset_id + suffix, self.params_hash, list(records), self.root)


def _ordered(record: dict) -> dict:
    out = {k: record[k] for k in RECORD_FIELDS if k in record}
    out.update({k: record[k] for k in sorted(record) if k not in out})
    return out


def write_manifest(manifest: DatasetManifest, path) -> Path:
    """JSON lines: a header object, then one record per tile sorted by tile id."""
    manifest.check()
    path = Path(path)
    recs = sorted(manifest.records, key=lambda r: r["tile_id"])
    lines = [json.dumps({"header": manifest.header()})]
    lines += [json.dumps(_ordered(r)) for r in recs]
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    header, records = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "header" in obj:
                header = obj["header"]
            else:
                records.append(obj)
    return DatasetManifest(header.get("dataset_id", path.parent.name), header.get("params_hash", ""),
                           records, str(path.parent))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# export

def tile_id(style_id, world_seed, center: Center) -> str:
    return f"{style_id}-{world_seed:016x}-r{center.row:03d}-c{center.col:03d}"


def _save_png(arr, path):
    Image.fromarray(arr).save(path, format="PNG")


def _export_one(job):
    scene, cam, center, out_dir = job
    tid = tile_id(scene.style_id, scene.world_seed, center)
    tile = render_tile(scene, cam.at((center.x, center.y)))
    mask = tile.mask
    rgb_rel, mask_rel = f"rgb/{tid}.png", f"mask/{tid}.png"
    _save_png(tile.rgb, Path(out_dir) / rgb_rel)
    _save_png(mask, Path(out_dir) / mask_rel)
    rec = {"tile_id": tid, "rgb": rgb_rel, "mask": mask_rel, "style_id": scene.style_id,
           "world_seed": scene.world_seed, "bounds": [round(v, 6) for v in tile.meta["bounds"]],
           "gsd_m": cam.gsd_m, "image_px": cam.image_px, "edge": bool(center.edge),
           "building_px": int(np.count_nonzero(mask))}
    if tile.meta["warnings"]:
        rec["warnings"] = tile.meta["warnings"]
    return rec


def params_hash(*parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()[:16]


def export_tiles(scene, centers, out_dir, camera: Optional[CameraSpec] = None,
                 dataset_id: Optional[str] = None, workers: int = 1, manifest: bool = True) -> DatasetManifest:
    """Render every center and write ``rgb/``, ``mask/`` and the manifest.

    ``centers`` may be a SweepSpec or a list of Center. On an I/O error the
    files written by this call are removed and ExportError is raised.
    """
    cam = camera or plan_camera(DEFAULT_GSD, DEFAULT_IMAGE_PX)
    if isinstance(centers, SweepSpec):
        centers = sweep(centers)
    out = Path(out_dir)
    tids = [tile_id(scene.style_id, scene.world_seed, c) for c in centers]
    try:
        (out / "rgb").mkdir(parents=True, exist_ok=True)
        (out / "mask").mkdir(parents=True, exist_ok=True)
        jobs = [(scene, cam, c, str(out)) for c in centers]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(_export_one, jobs))
        else:
            records = [_export_one(j) for j in jobs]
        ph = params_hash(scene.style_id, scene.world_seed, scene.extent_m, cam.to_dict(),
                         [tuple(c) for c in centers])
        m = DatasetManifest(dataset_id or f"{scene.style_id}-{scene.world_seed:016x}", ph,
                            sorted(records, key=lambda r: r["tile_id"]), str(out))
        m.check()
        if manifest:
            write_manifest(m, out / MANIFEST_NAME)
        return m
    except (OSError, ExportError) as exc:
        _cleanup(out, tids, manifest)
        raise ExportError(f"export to {out} failed: {exc}") from exc


def _cleanup(out: Path, tids, manifest: bool):
    paths = [out / sub / f"{t}.png" for t in tids for sub in ("rgb", "mask")]
    if manifest:
        paths += [out / MANIFEST_NAME, out / (MANIFEST_NAME + ".tmp")]
    for p in paths:
        try:
            p.unlink()
        except OSError:
            pass


def equal_split(total: int, n_styles: int) -> tuple:
    """Largest equal per-style count not exceeding ``total``: (per_style, pooled_total)."""
    per = total // n_styles
    return per, per * n_styles


def make_style_pool(styles: Sequence, tiles_per_style: int, base_seed: int, out_dir,
                    extent_m=1000.0, camera: Optional[CameraSpec] = None, stride_m=None,
                    policy="interior-only", max_worlds: int = 16, workers: int = 1,
                    dataset_id: str = "pool") -> DatasetManifest:
    """Export exactly ``tiles_per_style`` tiles for each style into one pool.

    Each style renders worlds with seeds derived from (base_seed, style,
    attempt) until it has enough tiles; the last world's sweep is
    truncated. ``styles`` holds StyleConfig objects or preset ids.
    """
    from .citygen import WorldConfig, build_world, load_style

    if tiles_per_style <= 0:
        raise ValueError("tiles_per_style must be positive")
    cam = camera or plan_camera(DEFAULT_GSD, DEFAULT_IMAGE_PX)
    records = []
    for st in styles:
        style = load_style(st) if isinstance(st, str) else st
        got = 0
        for attempt in range(max_worlds):
            seed = derive_seed(base_seed, "pool", style.id, attempt)
            cfg = WorldConfig(extent_m=extent_m, style=style.id, seed=seed)
            scene = build_world(cfg, style)
            centers = sweep(SweepSpec(cfg.extent_m, cam.footprint_m, stride_m, policy))
            take = centers[: tiles_per_style - got]
            if take:
                m = export_tiles(scene, take, out_dir, cam, workers=workers, manifest=False)
                records.extend(m.records)
                got += len(m.records)
            if got >= tiles_per_style:
                break
        if got < tiles_per_style:
            raise ExportError(f"style {style.id!r} produced {got} of {tiles_per_style} tiles "
                              f"after {max_worlds} worlds")
    ph = params_hash([getattr(s, "id", s) for s in styles], tiles_per_style, base_seed, extent_m,
                     cam.to_dict(), stride_m, policy)
    pool = DatasetManifest(dataset_id, ph, sorted(records, key=lambda r: r["tile_id"]), str(out_dir))
    write_manifest(pool, Path(out_dir) / MANIFEST_NAME)
    return pool


def subsample(manifest: DatasetManifest, fraction: float, seed: int) -> DatasetManifest:
    """Keep floor(fraction * N) records, chosen by a seeded permutation prefix.

    For one seed the kept sets are nested across fractions.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    n = len(manifest.records)
    k = int(math.floor(fraction * n))
    if k == 0:
        raise EmptySubsample(f"fraction {fraction} of {n} records keeps nothing")
    perm = stream(seed, "subsample", n).permutation(n)
    keep = np.sort(perm[:k])
    return manifest.with_records([manifest.records[i] for i in keep], suffix=f"-f{fraction:g}-s{seed}")


# mixed batches

@dataclass(frozen=True)
class BatchStream:
    batch_size: int = 7
    real_per_batch: int = 6
    synth_per_batch: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.real_per_batch + self.synth_per_batch != self.batch_size:
            raise ValueError("real_per_batch + synth_per_batch must equal batch_size")
        if self.real_per_batch < 0 or self.synth_per_batch < 0:
            raise ValueError("per-batch counts must be non-negative")


class _EpochCycler:
    """Draws ids epoch by epoch, each epoch a fresh seeded shuffle."""

    def __init__(self, ids, seed, tag):
        self.ids = list(ids)
        self.seed = seed
        self.tag = tag
        self.epoch = -1
        self.queue = deque()

    def _refill(self):
        self.epoch += 1
        perm = stream(self.seed, self.tag, self.epoch).permutation(len(self.ids))
        self.queue = deque(self.ids[i] for i in perm)

    def take(self, k) -> list:
        out = []
        while len(out) < k:
            if not self.queue:
                self._refill()
            if not self.queue[0] in out:
                out.append(self.queue.popleft())
                continue
            # a batch straddling two epochs would repeat an id; pull the next
            # distinct one forward (epoch membership is unchanged)
            for j in range(1, len(self.queue)):
                if self.queue[j] not in out:
                    out.append(self.queue[j])
                    del self.queue[j]
                    break
            else:
                out.append(self.queue.popleft())
        return out


class MixedBatchStream:
    """Infinite iterator of batches ``(real_ids, synthetic_ids)``."""

    def __init__(self, real_ids, synth_ids, spec: BatchStream = BatchStream()):
        if not len(real_ids) or not len(synth_ids):
            raise ValueError("real and synthetic id pools must be non-empty")
        if len(real_ids) < spec.real_per_batch or len(synth_ids) < spec.synth_per_batch:
            raise ValueError("id pools are smaller than the per-batch counts")
        self.spec = spec
        self.real = _EpochCycler(real_ids, spec.seed, "real")
        self.synth = _EpochCycler(synth_ids, spec.seed, "synthetic")
        self.batches = 0

    @property
    def real_epoch(self) -> int:
        return max(self.real.epoch, 0)

    def __iter__(self):
        return self

    def __next__(self):
        b = (self.real.take(self.spec.real_per_batch), self.synth.take(self.spec.synth_per_batch))
        self.batches += 1
        return b


def mixed_batch_stream(real_ids, synth_ids, spec: BatchStream = BatchStream()) -> Iterator:
    return MixedBatchStream(real_ids, synth_ids, spec)


def write_batch_plan(path, batches) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for i, (real, synth) in enumerate(batches):
            fh.write(json.dumps({"batch": i, "real": list(real), "synthetic": list(synth)}) + "\n")
            n += 1
    return n


# training schedule

BASE_LR = {"deeplabv3": 5e-5, "unet": 1e-4}


@dataclass(frozen=True)
class Stage:
    iterations: int
    lr: float
    data: str
    lr_drop_iteration: Optional[int] = None
    drop_factor: Optional[float] = None


@dataclass(frozen=True)
class TrainingSchedule:
    model: str
    batch: BatchStream
    stages: tuple

    @property
    def stage1(self) -> Stage:
        return self.stages[0]

    @property
    def stage2(self) -> Optional[Stage]:
        return self.stages[1] if len(self.stages) > 1 else None

    def to_dict(self) -> dict:
        return {"model": self.model, "batch": dataclasses.asdict(self.batch),
                "stages": [{k: v for k, v in dataclasses.asdict(s).items() if v is not None}
                           for s in self.stages]}


def training_schedule(model: str, with_synthetic: bool) -> TrainingSchedule:
    if model not in BASE_LR:
        raise ValueError(f"model must be one of {sorted(BASE_LR)}, got {model!r}")
    data = "real+synthetic" if with_synthetic else "real"
    stages = [Stage(80_000, BASE_LR[model], data, lr_drop_iteration=50_000, drop_factor=10.0)]
    if with_synthetic:
        stages.append(Stage(50_000, 2e-5, "real"))
    batch = BatchStream() if with_synthetic else BatchStream(7, 7, 0)
    return TrainingSchedule(model, batch, tuple(stages))
