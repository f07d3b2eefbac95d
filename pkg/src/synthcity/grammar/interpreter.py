"""
Derivation: depth-first rewriting of shapes by a parsed grammar program,
ending in a labeled triangle mesh.

Shape kinds
    poly      horizontal polygon at height ``z`` (the initial lot)
    prism     extruded polygon (``z`` .. ``z + height``)
    quad      oriented rectangle (facade pieces from ``comp``)
    roofed    prism capped by a pitched or flat roof
    roofpoly  roof surfaces over a horizontal polygon
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional

import numpy as np
import shapely
from shapely.geometry import Polygon

from .. import geometry as geo
from ..errors import EmptyDerivation, GrammarError, RecursionLimitExceeded, UndefinedSymbol
from ..mesh import DEFAULT_MATERIAL, Label, LabeledMesh, Material, MeshBuilder
from ..rng import stream
from .ast import NIL, BinOp, Call, Emit, Neg, Num, Op, Program, Ref
from .split import Rel, apply_split

MAX_DEPTH = 64
MAX_APPLICATIONS = 100_000
DEFAULT_PITCH = 30.0


@dataclass
class Shape:
    kind: str
    symbol: str
    label: Label
    poly: Optional[np.ndarray] = None
    z: float = 0.0
    height: float = 0.0
    origin: Optional[np.ndarray] = None
    ax: Optional[np.ndarray] = None
    ay: Optional[np.ndarray] = None
    size: tuple = (0.0, 0.0)
    roof: Optional[tuple] = None
    material: Optional[Material] = None
    depth: int = 0


class _Derivation:
    def __init__(self, program: Program, seed: int, palette: Mapping[str, Material], max_depth: int, trace):
        self.program = program
        self.rules = {r.name: r for r in program.rules}
        self.seed = seed
        self.palette = dict(palette or {})
        self.max_depth = max_depth
        self.trace = trace
        self.counter = 0
        self.out = MeshBuilder()
        self.stack = []
        self.env = {}
        rng = stream(seed, "attrs")
        for a in program.attrs:
            self.env[a.name] = self.eval(a.expr, rng)

    # expressions

    def eval(self, e, rng) -> float:
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Ref):
            if e.name not in self.env:
                raise UndefinedSymbol(e.name)
            return self.env[e.name]
        if isinstance(e, Neg):
            return -self.eval(e.operand, rng)
        if isinstance(e, BinOp):
            a = self.eval(e.left, rng)
            b = self.eval(e.right, rng)
            if e.op == "+":
                return a + b
            if e.op == "-":
                return a - b
            if e.op == "*":
                return a * b
            if b == 0:
                raise GrammarError("division by zero in expression")
            return a / b
        if isinstance(e, Call) and e.name == "rand":
            lo, hi = (self.eval(x, rng) for x in e.args)
            return float(rng.uniform(lo, hi)) if hi > lo else lo
        raise GrammarError(f"cannot evaluate {e!r}")

    # rewriting

    def run(self, lot: Shape):
        self.stack.append(lot)
        while self.stack:
            shape = self.stack.pop()
            if shape.symbol == NIL:
                continue
            rule = self.rules.get(shape.symbol)
            if rule is None:
                # declared terminals and symbols without a rule both end here;
                # link() is the strict check
                self.emit_geometry(shape)
                continue
            if shape.depth > self.max_depth:
                raise RecursionLimitExceeded(
                    f"derivation deeper than {self.max_depth} at symbol {shape.symbol!r}")
            self.counter += 1
            if self.counter > MAX_APPLICATIONS:
                raise RecursionLimitExceeded(f"more than {MAX_APPLICATIONS} rule applications")
            rng = stream(self.seed, "rule", self.counter)
            k = 0
            if rule.stochastic:
                u = rng.random()
                acc = 0.0
                k = len(rule.alternatives) - 1
                for i, alt in enumerate(rule.alternatives):
                    acc += alt.weight
                    if u < acc:
                        k = i
                        break
            if self.trace is not None:
                self.trace.append((rule.name, k))
            pending = []
            self.run_body(shape, rule.alternatives[k].body, rng, pending)
            self.stack.extend(reversed(pending))

    def run_body(self, shape: Optional[Shape], body, rng, pending):
        consumed = False
        for item in body:
            if shape is None:
                return
            if isinstance(item, Emit):
                child = replace(shape, symbol=item.symbol, depth=shape.depth + 1)
                pending.append(child)
                consumed = True
                continue
            if item.name in ("split", "comp"):
                children = self.split(shape, item, rng) if item.name == "split" else self.comp(shape, item)
                for child, br in children:
                    self.run_body(child, br.body, rng, pending)
                consumed = True
                shape = None
                continue
            shape = self.apply(shape, item, rng)
        if shape is not None and not consumed:
            self.emit_geometry(shape)

    def apply(self, s: Shape, op: Op, rng) -> Optional[Shape]:
        name = op.name
        if name == "extrude":
            h = self.eval(op.args[0], rng)
            if not h > 0:
                raise GrammarError(f"extrude height must be positive, got {h}")
            if s.kind == "poly":
                return replace(s, kind="prism", height=h, label=Label.BUILDING)
            if s.kind == "prism":
                return replace(s, height=h)
            raise GrammarError(f"extrude() not defined on {s.kind} shapes")
        if name == "setback":
            d = self.eval(op.args[0], rng)
            if d < 0:
                raise GrammarError(f"setback distance must be non-negative, got {d}")
            if d == 0:
                return s
            if s.kind in ("poly", "prism"):
                p = geo.offset_polygon(s.poly, d)
                return None if p is None else replace(s, poly=p)
            if s.kind == "quad":
                w, h = s.size
                if w <= 2 * d or h <= 2 * d:
                    return None
                return replace(s, origin=s.origin + d * s.ax + d * s.ay, size=(w - 2 * d, h - 2 * d))
            raise GrammarError(f"setback() not defined on {s.kind} shapes")
        if name == "roof":
            kind = op.args[0].name
            pitch = self.eval(op.args[1], rng) if len(op.args) > 1 else (0.0 if kind == "flat" else DEFAULT_PITCH)
            if not 0 <= pitch < 90:
                raise GrammarError(f"roof pitch must lie in [0, 90), got {pitch}")
            if s.kind == "prism":
                return replace(s, kind="roofed", roof=(kind, pitch))
            if s.kind == "poly":
                return replace(s, kind="roofpoly", roof=(kind, pitch), label=Label.ROOF)
            raise GrammarError(f"roof() not defined on {s.kind} shapes")
        if name == "color":
            rgb = tuple(self.eval(a, rng) for a in op.args)
            return replace(s, material=Material.from_spec("color", rgb))
        if name == "texture":
            key = op.args[0].name
            if key not in self.palette:
                raise GrammarError(f"texture {key!r} not in palette")
            return replace(s, material=self.palette[key])
        raise GrammarError(f"operation {name}() cannot be applied here")

    def split(self, s: Shape, op: Op, rng):
        axis = op.args[0].name
        spec = []
        for br in op.branches:
            v = self.eval(br.key, rng)
            spec.append(Rel(v) if br.relative else v)
        if s.kind in ("poly", "prism") and axis in ("x", "y"):
            origin, axes, size = geo.oriented_bbox(s.poly)
            k = 0 if axis == "x" else 1
            sizes = apply_split(size[k], spec)
            out = []
            pos = 0.0
            base = Polygon(s.poly)
            for br, ln in zip(op.branches, sizes):
                lo, hi = pos, pos + ln
                pos = hi
                if ln <= 1e-9:
                    continue
                pad = size[1 - k] + 1.0
                a, b = axes[k], axes[1 - k]
                slab = [origin + lo * a - b, origin + hi * a - b,
                        origin + hi * a + pad * b, origin + lo * a + pad * b]
                for piece in _pieces(base.intersection(Polygon(slab))):
                    out.append((replace(s, poly=piece), br))
            return out
        if s.kind == "prism" and axis == "z":
            sizes = apply_split(s.height, spec)
            out, pos = [], 0.0
            for br, ln in zip(op.branches, sizes):
                if ln > 1e-9:
                    out.append((replace(s, z=s.z + pos, height=ln), br))
                pos += ln
            return out
        if s.kind == "quad" and axis in ("x", "y"):
            k = 0 if axis == "x" else 1
            sizes = apply_split(s.size[k], spec)
            out, pos = [], 0.0
            step = s.ax if k == 0 else s.ay
            for br, ln in zip(op.branches, sizes):
                if ln > 1e-9:
                    size = (ln, s.size[1]) if k == 0 else (s.size[0], ln)
                    out.append((replace(s, origin=s.origin + pos * step, size=size), br))
                pos += ln
            return out
        raise GrammarError(f"split({axis}) not defined on {s.kind} shapes")

    def comp(self, s: Shape, op: Op):
        if s.kind != "prism":
            raise GrammarError(f"comp(faces) needs an extruded shape, got {s.kind}")
        out = []
        p = s.poly
        for br in op.branches:
            if br.key == "top":
                out.append((replace(s, kind="poly", z=s.z + s.height, height=0.0, label=Label.ROOF), br))
            elif br.key == "bottom":
                out.append((replace(s, kind="poly", height=0.0, label=Label.BUILDING), br))
            else:
                for i in range(len(p)):
                    a, b = p[i], p[(i + 1) % len(p)]
                    d = b - a
                    ln = math.hypot(d[0], d[1])
                    if ln <= 1e-9:
                        continue
                    out.append((replace(
                        s, kind="quad", poly=None, height=0.0,
                        origin=np.array([a[0], a[1], s.z]),
                        ax=np.array([d[0] / ln, d[1] / ln, 0.0]),
                        ay=np.array([0.0, 0.0, 1.0]),
                        size=(ln, s.height), label=Label.BUILDING), br))
        return out

    # geometry

    def material_for(self, s: Shape, label: Label) -> Material:
        if s.material is not None:
            return s.material
        key = "roof" if label == Label.ROOF else "wall"
        return self.palette.get(key, DEFAULT_MATERIAL)

    def emit_geometry(self, s: Shape):
        add = self.out.add
        if s.kind == "poly":
            if s.label == Label.GROUND:
                return  # open ground is meshed by the city populator
            add(_flat(s.poly, s.z), s.label, self.material_for(s, s.label))
        elif s.kind == "prism":
            z1 = s.z + s.height
            add(_flat(s.poly, z1), Label.ROOF, self.material_for(s, Label.ROOF))
            add(_walls(s.poly, s.z, z1), Label.BUILDING, self.material_for(s, Label.BUILDING))
            add(_flat(s.poly, s.z)[:, ::-1], Label.BUILDING, self.material_for(s, Label.BUILDING))
        elif s.kind == "roofed":
            z1 = s.z + s.height
            add(_walls(s.poly, s.z, z1), Label.BUILDING, self.material_for(s, Label.BUILDING))
            add(_flat(s.poly, s.z)[:, ::-1], Label.BUILDING, self.material_for(s, Label.BUILDING))
            for tris, label in roof_surfaces(s.poly, z1, *s.roof):
                add(tris, label, self.material_for(s, label))
        elif s.kind == "roofpoly":
            for tris, label in roof_surfaces(s.poly, s.z, *s.roof):
                add(tris, label, self.material_for(s, label))
        elif s.kind == "quad":
            o = s.origin
            w, h = s.size
            p10 = o + w * s.ax
            p01 = o + h * s.ay
            p11 = p10 + h * s.ay
            add(np.array([[o, p10, p11], [o, p11, p01]]), s.label, self.material_for(s, s.label))


def _pieces(geom):
    out = []
    for g in getattr(geom, "geoms", [geom]):
        if g.geom_type == "Polygon" and g.area > 1e-9:
            ring = geo.remove_collinear(np.asarray(g.exterior.coords)[:-1])
            if len(ring) >= 3:
                out.append(geo.ensure_ccw(ring))
        elif g.geom_type in ("MultiPolygon", "GeometryCollection"):
            out.extend(_pieces(g))
    return out


def _lift(tris2, z):
    tris2 = np.asarray(tris2, dtype=float)
    return np.concatenate([tris2, np.full(tris2.shape[:2] + (1,), z)], axis=2)


def _flat(poly, z):
    return _lift(geo.ear_clip(poly), z)


def _walls(poly, z0, z1):
    a = np.asarray(poly, dtype=float)
    b = np.roll(a, -1, axis=0)
    a0, b0 = _lift(a[:, None], z0)[:, 0], _lift(b[:, None], z0)[:, 0]
    a1, b1 = _lift(a[:, None], z1)[:, 0], _lift(b[:, None], z1)[:, 0]
    t1 = np.stack([a0, b0, b1], axis=1)
    t2 = np.stack([a0, b1, a1], axis=1)
    return np.concatenate([t1, t2])


def _is_rectangle(poly):
    p = geo.remove_collinear(poly)
    if len(p) != 4:
        return None
    origin, axes, size = geo.oriented_bbox(p)
    area = geo.polygon_area(p)
    if abs(size[0] * size[1] - area) > 1e-6 * max(area, 1e-12):
        return None
    return origin, axes, size


def _is_convex(poly):
    p = geo.remove_collinear(poly)
    n = len(p)
    return all(geo.orient(p[i - 1], p[i], p[(i + 1) % n]) > 0 for i in range(n))


def _orient_up(tris):
    n = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    flip = n[:, 2] < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, ::-1]
    return tris


def _orient_out(tris, center):
    n = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    c = tris.mean(axis=1) - center
    flip = np.einsum("ij,ij->i", n, c) < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, ::-1]
    return tris


def roof_surfaces(poly, z, kind, pitch):
    """Roof triangles over ``poly`` at eave height ``z``: ``[(tris, label), ...]``.

    Gable and hip roofs are exact on rectangles; other convex footprints get
    a pyramid; non-convex footprints fall back to flat.
    """
    poly = geo.ensure_ccw(poly)
    if kind == "flat" or pitch <= 0:
        return [(_flat(poly, z), Label.ROOF)]
    t = math.tan(math.radians(pitch))
    rect = _is_rectangle(poly)
    if rect is not None:
        origin, axes, (A, B) = rect

        def w(a, b, h=0.0):
            xy = origin + a * axes[0] + b * axes[1]
            return np.array([xy[0], xy[1], z + h])

        rise = 0.5 * B * t
        c00, c10, c11, c01 = w(0, 0), w(A, 0), w(A, B), w(0, B)
        if kind == "gable":
            r0, r1 = w(0, B / 2, rise), w(A, B / 2, rise)
            slopes = np.array([[c00, c10, r1], [c00, r1, r0], [c11, c01, r0], [c11, r0, r1]])
            ends = np.array([[c10, c11, r1], [c01, c00, r0]])
            center = (c00 + c11) / 2.0
            return [(_orient_up(slopes), Label.ROOF), (_orient_out(ends, center), Label.BUILDING)]
        r0, r1 = w(B / 2, B / 2, rise), w(A - B / 2, B / 2, rise)
        faces = [[c00, c10, r1], [c11, c01, r0], [c10, c11, r1], [c01, c00, r0]]
        if A - B > 1e-9:
            faces += [[c00, r1, r0], [c11, r0, r1]]
        return [(_orient_up(np.array(faces)), Label.ROOF)]
    if _is_convex(poly):
        p = geo.remove_collinear(poly)
        cen = np.asarray(Polygon(p).centroid.coords[0])
        inr = min(geo.point_segment_distance(cen, p[i], p[(i + 1) % len(p)]) for i in range(len(p)))
        apex = np.array([cen[0], cen[1], z + inr * t])
        tris = np.array([[[*p[i], z], [*p[(i + 1) % len(p)], z], apex] for i in range(len(p))])
        return [(_orient_up(tris), Label.ROOF)]
    return [(_flat(poly, z), Label.ROOF)]


def derive(lot, program: Program, seed: int, palette: Optional[Mapping[str, Material]] = None,
           max_depth: int = MAX_DEPTH, start: str = "Lot", trace: Optional[list] = None) -> LabeledMesh:
    """Rewrite ``lot`` from the ``start`` symbol and return the terminal mesh.

    The result depends only on (lot, program, seed, palette). Each rule
    application draws from its own stream keyed by (seed, application
    counter). ``trace``, if given, receives ``(rule, alternative)`` pairs.
    """
    if program.rule(start) is None:
        raise EmptyDerivation(f"program has no rule for start symbol {start!r}")
    boundary = getattr(lot, "boundary", lot)
    poly = geo.ensure_ccw(geo.dedupe(boundary))
    if len(poly) < 3 or geo.polygon_area(poly) <= 0:
        raise GrammarError("lot polygon is degenerate")
    d = _Derivation(program, seed, palette or {}, max_depth, trace)
    d.run(Shape("poly", start, Label.GROUND, poly=poly))
    return d.out.build()
