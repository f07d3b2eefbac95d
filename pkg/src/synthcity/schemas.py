"""JSON schemas for configuration documents (validated before any work starts)."""

from __future__ import annotations

import jsonschema

from .errors import ConfigError

_XY = {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                 {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                  "minItems": 2, "maxItems": 2}]}
_SEED = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_TOPOLOGY = {"oneOf": [
    {"enum": ["raster", "radial", "organic"]},
    {"type": "object", "minProperties": 1, "additionalProperties": False,
     "properties": {k: {"type": "number", "minimum": 0} for k in ("raster", "radial", "organic")}},
]}

ROADS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "topology": _TOPOLOGY,
        "extent_m": _XY,
        "spacing_m": {"type": "number", "exclusiveMinimum": 0},
        "jitter": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
        "seed": _SEED,
        "rings": {"type": "integer", "minimum": 1},
        "spokes": {"type": "integer", "minimum": 3},
        "districts": {"type": "array", "items": {"type": "integer", "minimum": 1},
                      "minItems": 2, "maxItems": 2},
        "arterial_every": {"type": "integer", "minimum": 1},
        "widths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                   "minItems": 2, "maxItems": 2},
    },
}

WORLD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "extent_m": _XY,
        "roads": ROADS_SCHEMA,
        "style": {"type": "string", "minLength": 1},
        "seed": _SEED,
        "setback_m": {"type": "number", "minimum": 0},
    },
}

CAMERA_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mode": {"enum": ["orthographic", "perspective"]},
        "gsd_m": {"type": "number", "exclusiveMinimum": 0},
        "image_px": {"type": "integer", "minimum": 1},
        "fov_deg": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 180},
        "sun_azimuth_deg": {"type": "number"},
        "sun_elevation_deg": {"type": "number", "minimum": 0, "maximum": 90},
        "shadows": {"type": "boolean"},
    },
}

SWEEP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "stride_m": {"type": "number", "exclusiveMinimum": 0},
        "policy": {"enum": ["interior-only", "clipped-cover"]},
    },
}

GENERATE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["world"],
    "properties": {
        "world": WORLD_SCHEMA,
        "camera": CAMERA_SCHEMA,
        "sweep": SWEEP_SCHEMA,
        "dataset_id": {"type": "string"},
    },
}

POOL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["tiles_per_style"],
    "properties": {
        "styles": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "tiles_per_style": {"type": "integer", "minimum": 1},
        "base_seed": _SEED,
        "extent_m": _XY,
        "camera": CAMERA_SCHEMA,
        "sweep": SWEEP_SCHEMA,
        "max_worlds": {"type": "integer", "minimum": 1},
        "dataset_id": {"type": "string"},
    },
}

# a list of tile ids, or the path of a manifest to take them from
_IDS = {"oneOf": [{"type": "array", "items": {"type": "string"}, "minItems": 1},
                  {"type": "string", "minLength": 1}]}

BATCH_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["real", "synthetic"],
    "properties": {
        "real": _IDS,
        "synthetic": _IDS,
        "model": {"enum": ["unet", "deeplabv3"]},
        "batches": {"type": "integer", "minimum": 1},
        "batch_size": {"type": "integer", "minimum": 1},
        "real_per_batch": {"type": "integer", "minimum": 0},
        "synth_per_batch": {"type": "integer", "minimum": 0},
        "seed": _SEED,
    },
}


def validate(doc, schema) -> None:
    """Raise ConfigError naming the offending key when ``doc`` violates ``schema``."""
    v = jsonschema.Draft202012Validator(schema)
    errors = sorted(v.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if not errors:
        return
    e = errors[0]
    key = ".".join(str(p) for p in e.absolute_path)
    if e.validator == "additionalProperties":
        extra = sorted(set(e.instance) - set(e.schema.get("properties", {})))
        key = ".".join(filter(None, [key, extra[0] if extra else ""]))
        raise ConfigError(f"unknown key {key!r}", key)
    raise ConfigError(f"invalid value at {key or '<root>'!r}: {e.message}", key or None)
