"""Command-line driver: ``synthcity <generate|pool|subsample|batchplan|eval|stats>``.

Exit status: 0 success, 1 operational failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

from .errors import ConfigError, SynthCityError

log = logging.getLogger("synthcity")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from exc


def _workers(args) -> int:
    return args.workers if args.workers else (os.cpu_count() or 1)


def _camera(doc):
    from .render import plan_camera

    doc = dict(doc or {})
    g = doc.pop("gsd_m", 0.3)
    W = doc.pop("image_px", 572)
    mode = doc.pop("mode", "orthographic")
    fov = doc.pop("fov_deg", 10.0 if mode == "perspective" else None)
    return plan_camera(g, W, mode, fov, **doc)


def cmd_generate(args) -> int:
    from .citygen import WorldConfig, build_world
    from .dataset import SweepSpec, export_tiles, file_digest
    from .schemas import GENERATE_SCHEMA, validate

    doc = _load_json(args.config)
    validate(doc, GENERATE_SCHEMA)
    world = dict(doc["world"])
    if args.seed is not None:
        world["seed"] = args.seed
    cfg = WorldConfig.from_dict(world)
    cam = _camera(doc.get("camera"))
    sw = doc.get("sweep", {})
    out = Path(args.out)
    t0 = time.perf_counter()
    scene = build_world(cfg)
    t1 = time.perf_counter()
    spec = SweepSpec(cfg.extent_m, cam.footprint_m, sw.get("stride_m"), sw.get("policy", "interior-only"))
    manifest = export_tiles(scene, spec, out, cam, dataset_id=doc.get("dataset_id"), workers=_workers(args))
    t2 = time.perf_counter()
    km2 = cfg.extent_m[0] * cfg.extent_m[1] / 1e6
    report = {
        "tiles": len(manifest),
        "area_km2": km2,
        "buildings": scene.n_buildings,
        "lot_errors": list(scene.errors),
        "stages_s": {**{k: round(v, 4) for k, v in scene.timings.items()},
                     "world_s": round(t1 - t0, 4), "export_s": round(t2 - t1, 4), "total_s": round(t2 - t0, 4)},
        "km2_per_minute": km2 / ((t2 - t0) / 60.0),
        "manifest_sha256": file_digest(out / "manifest.jsonl"),
    }
    (out / "run_report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_pool(args) -> int:
    from .citygen import DEFAULT_STYLES
    from .dataset import make_style_pool
    from .schemas import POOL_SCHEMA, validate

    doc = _load_json(args.config)
    validate(doc, POOL_SCHEMA)
    styles = args.styles.split(",") if args.styles else doc.get("styles", list(DEFAULT_STYLES))
    seed = args.seed if args.seed is not None else doc.get("base_seed", 0)
    sw = doc.get("sweep", {})
    pool = make_style_pool(styles, doc["tiles_per_style"], seed, args.out,
                           extent_m=doc.get("extent_m", 1000.0), camera=_camera(doc.get("camera")),
                           stride_m=sw.get("stride_m"), policy=sw.get("policy", "interior-only"),
                           max_worlds=doc.get("max_worlds", 16), workers=_workers(args),
                           dataset_id=doc.get("dataset_id", "pool"))
    counts = {}
    for r in pool.records:
        counts[r["style_id"]] = counts.get(r["style_id"], 0) + 1
    print(json.dumps({"records": len(pool), "per_style": counts}, indent=2))
    return EXIT_OK


def _output_manifest_path(out) -> Path:
    out = Path(out)
    if out.suffix != ".jsonl":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "manifest.jsonl"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    return out


def cmd_subsample(args) -> int:
    from .dataset import load_manifest, subsample, write_manifest

    if args.fraction is None:
        raise UsageError("subsample needs --fraction")
    m = load_manifest(args.manifest)
    sub = subsample(m, args.fraction, args.seed if args.seed is not None else 0)
    dest = _output_manifest_path(args.out)
    # keep file references valid from the new manifest's directory
    rebase = os.path.relpath(Path(m.root or "."), dest.parent)
    for r in sub.records:
        for k in ("rgb", "mask"):
            if k in r and not os.path.isabs(r[k]):
                r[k] = os.path.normpath(os.path.join(rebase, r[k]))
    sub.root = str(dest.parent)
    write_manifest(sub, dest)
    print(json.dumps({"input": len(m), "kept": len(sub), "manifest": str(dest)}))
    return EXIT_OK


def cmd_batchplan(args) -> int:
    from .dataset import BatchStream, load_manifest, mixed_batch_stream, training_schedule, write_batch_plan
    from .schemas import BATCH_SCHEMA, validate

    doc = _load_json(args.config)
    validate(doc, BATCH_SCHEMA)

    def ids(v):
        return load_manifest(v).tile_ids if isinstance(v, str) else list(v)

    real, synth = ids(doc["real"]), ids(doc["synthetic"])
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    spec = BatchStream(doc.get("batch_size", 7), doc.get("real_per_batch", 6), doc.get("synth_per_batch", 1), seed)
    n = doc.get("batches", math.ceil(len(real) / max(spec.real_per_batch, 1)))
    stream = mixed_batch_stream(real, synth, spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    written = write_batch_plan(out, (next(stream) for _ in range(n)))
    result = {"batches": written, "plan": str(out)}
    if doc.get("model"):
        sched = training_schedule(doc["model"], True)
        sp = out.with_name(out.stem + ".schedule.json")
        sp.write_text(json.dumps(sched.to_dict(), indent=2) + "\n", encoding="utf-8")
        result["schedule"] = str(sp)
    print(json.dumps(result))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluate import evaluate_dirs, format_table

    strata = _load_json(args.strata) if args.strata else None
    rep = evaluate_dirs(Path(args.dir) / "pred", Path(args.dir) / "gt", strata, args.per_tile)
    print(format_table({args.name: rep}))
    if args.out:
        Path(args.out).write_text(rep.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_stats(args) -> int:
    from .dataset import load_manifest
    from .evaluate import dataset_stats

    st = dataset_stats(load_manifest(args.manifest), read_pixels=not args.no_pixels)
    text = json.dumps(st, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synthcity", description="Procedural city worlds to labeled aerial tiles.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--out", required=out_required, help="output directory or file")
        sp.add_argument("--seed", type=int, help="override the seed in the config")
        sp.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")

    g = sub.add_parser("generate", help="build one world and export its tiles")
    g.add_argument("--config", required=True)
    common(g)
    g.set_defaults(func=cmd_generate)

    pl = sub.add_parser("pool", help="equal-count multi-style tile pool")
    pl.add_argument("--config", required=True)
    pl.add_argument("--styles", help="comma-separated style ids, e.g. a,b,c,g,h,i")
    common(pl)
    pl.set_defaults(func=cmd_pool)

    s = sub.add_parser("subsample", help="nested random subset of a manifest")
    s.add_argument("manifest", help="manifest.jsonl or its directory")
    s.add_argument("--fraction", type=float)
    common(s)
    s.set_defaults(func=cmd_subsample)

    b = sub.add_parser("batchplan", help="mixed real/synthetic batch plan")
    b.add_argument("--config", required=True)
    common(b)
    b.set_defaults(func=cmd_batchplan)

    e = sub.add_parser("eval", help="IoU of pred/ against gt/ masks")
    e.add_argument("dir", help="directory holding pred/ and gt/")
    e.add_argument("--out", help="write the JSON report here")
    e.add_argument("--strata", help="JSON map of file stem to stratum")
    e.add_argument("--per-tile", action="store_true", help="average IoU per tile instead of pooling pixels")
    e.add_argument("--name", default="model", help="row label in the table")
    e.set_defaults(func=cmd_eval)

    st = sub.add_parser("stats", help="dataset statistics for a manifest")
    st.add_argument("manifest")
    st.add_argument("--out")
    st.add_argument("--no-pixels", action="store_true", help="skip reading mask files")
    st.set_defaults(func=cmd_stats)
    return p


def _error(kind, exc, code) -> int:
    body = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    key = getattr(exc, "key", None)
    if key:
        body["key"] = key
    print(json.dumps(body), file=sys.stderr)
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SYNTHCITY_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        return _error("config", exc, EXIT_USAGE)
    except (SynthCityError, OSError, ValueError) as exc:
        return _error("operational", exc, EXIT_FAIL)


if __name__ == "__main__":
    sys.exit(main())
