"""
Segmentation scoring: binary IoU, benchmark train/test splits, stratified
(city/style) reports and dataset statistics.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np
from PIL import Image

from .errors import DimensionMismatch

log = logging.getLogger(__name__)


class Counts(NamedTuple):
    tp: int
    fp: int
    fn: int

    def __add__(self, other):
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def iou(self) -> float:
        d = self.tp + self.fp + self.fn
        # both masks empty: vacuous agreement
        return 1.0 if d == 0 else self.tp / d


def _check(pred, gt):
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    return pred != 0, gt != 0


def confusion(pred, gt) -> Counts:
    """Foreground TP/FP/FN pixel counts; any nonzero pixel is foreground."""
    p, g = _check(pred, gt)
    tp = int(np.count_nonzero(p & g))
    return Counts(tp, int(np.count_nonzero(p)) - tp, int(np.count_nonzero(g)) - tp)


def iou(pred, gt) -> float:
    """|pred and gt| / |pred or gt|; 1.0 when both are empty."""
    return confusion(pred, gt).iou


@dataclass(frozen=True)
class MaskPair:
    pred: np.ndarray
    gt: np.ndarray
    stratum: str = "all"
    name: str = ""


@dataclass
class StratumStats:
    counts: Counts
    n_tiles: int
    tile_ious: list = field(default_factory=list)

    @property
    def iou(self) -> float:
        return self.counts.iou

    @property
    def mean_tile_iou(self) -> float:
        return float(np.mean(self.tile_ious)) if self.tile_ious else float("nan")


@dataclass
class IoUReport:
    strata: dict  # stratum -> StratumStats, in first-seen order
    overall: StratumStats
    per_tile: bool = False  # report per-tile mean IoU instead of pooled pixels

    def value(self, stratum=None) -> float:
        s = self.overall if stratum is None else self.strata[stratum]
        return s.mean_tile_iou if self.per_tile else s.iou

    @property
    def overall_iou(self) -> float:
        return self.value()

    def to_dict(self) -> dict:
        def row(s):
            return {"tp": s.counts.tp, "fp": s.counts.fp, "fn": s.counts.fn, "iou": s.iou,
                    "mean_tile_iou": s.mean_tile_iou, "n_tiles": s.n_tiles}

        return {"strata": {k: row(v) for k, v in self.strata.items()},
                "overall": row(self.overall), "aggregation": "per-tile" if self.per_tile else "pooled"}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True)


def stratified_report(pairs: Sequence[MaskPair], per_tile: bool = False) -> IoUReport:
    """Per-stratum and overall IoU.

    Pooled IoU sums TP/FP/FN over a stratum's tiles before dividing, so
    the overall value equals the IoU of all masks concatenated.
    """
    if not pairs:
        raise ValueError("stratified_report needs at least one mask pair")
    strata = {}
    total = StratumStats(Counts(0, 0, 0), 0)
    for p in pairs:
        c = confusion(p.pred, p.gt)
        s = strata.setdefault(p.stratum, StratumStats(Counts(0, 0, 0), 0))
        for acc in (s, total):
            acc.counts = acc.counts + c
            acc.n_tiles += 1
            acc.tile_ious.append(c.iou)
    return IoUReport(strata, total, per_tile)


def report_from_counts(counts: Mapping[str, Counts]) -> IoUReport:
    strata = {k: StratumStats(Counts(*v), 1, [Counts(*v).iou]) for k, v in counts.items()}
    tot = Counts(0, 0, 0)
    for s in strata.values():
        tot = tot + s.counts
    return IoUReport(strata, StratumStats(tot, len(strata), [s.iou for s in strata.values()]))


def format_table(reports: Mapping[str, IoUReport], digits: int = 3) -> str:
    """Aligned text table: configurations as rows, strata (plus overall) as columns."""
    cols = []
    for r in reports.values():
        for k in r.strata:
            if k not in cols:
                cols.append(k)
    header = ["config"] + [str(c) for c in cols] + ["overall"]
    rows = []
    for name, r in reports.items():
        vals = [f"{r.value(c):.{digits}f}" if c in r.strata else "-" for c in cols]
        rows.append([str(name)] + vals + [f"{r.overall_iou:.{digits}f}"])
    widths = [max(len(x[i]) for x in [header] + rows) for i in range(len(header))]

    def fmt(cells):
        return "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))

    return "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows])


def split_benchmark(regions: Mapping[str, Sequence[str]], k_test: int) -> dict:
    """First ``k_test`` tile ids of every region go to test, the rest to train."""
    if k_test < 0:
        raise ValueError("k_test must be non-negative")
    train, test = [], []
    for region, ids in regions.items():
        ids = list(ids)
        if len(ids) <= k_test:
            raise ValueError(f"region {region!r} has {len(ids)} tiles; needs more than {k_test}")
        test.extend(ids[:k_test])
        train.extend(ids[k_test:])
    if len(set(train) | set(test)) != len(train) + len(test):
        raise ValueError("tile ids repeat across regions")
    return {"train": train, "test": test}


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def dataset_stats(manifest, read_pixels: bool = True) -> dict:
    """Tile count, covered area N*(W*g)^2 in km^2, building-pixel fraction, per-style counts."""
    records = manifest.records
    area = sum((r["image_px"] * r["gsd_m"]) ** 2 for r in records) / 1e6
    styles = {}
    for r in records:
        styles[r.get("style_id", "?")] = styles.get(r.get("style_id", "?"), 0) + 1
    out = {"tiles": len(records), "area_km2": area, "per_style": dict(sorted(styles.items())),
           "building_fraction": None, "unreadable": []}
    if read_pixels and records:
        fg = tot = 0
        for r in records:
            try:
                m = read_mask(manifest.path(r, "mask"))
            except (OSError, ValueError) as exc:
                out["unreadable"].append({"tile_id": r["tile_id"], "error": str(exc)})
                continue
            fg += int(np.count_nonzero(m))
            tot += m.size
        out["building_fraction"] = fg / tot if tot else None
    return out


def evaluate_dirs(pred_dir, gt_dir, strata: Optional[Mapping[str, str]] = None,
                  per_tile: bool = False) -> IoUReport:
    """Score identically named mask files under ``pred_dir`` and ``gt_dir``.

    ``strata`` maps file stems to stratum names (default: a single stratum).
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    names = sorted(p.name for p in gt_dir.iterdir() if p.is_file())
    if not names:
        raise ValueError(f"no ground-truth masks in {gt_dir}")
    missing = [n for n in names if not (pred_dir / n).is_file()]
    if missing:
        raise FileNotFoundError(f"{len(missing)} predictions missing, e.g. {missing[0]}")
    pairs = []
    for n in names:
        stem = Path(n).stem
        pairs.append(MaskPair(read_mask(pred_dir / n), read_mask(gt_dir / n),
                              (strata or {}).get(stem, "all"), stem))
    return stratified_report(pairs, per_tile)
