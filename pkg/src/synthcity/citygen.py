"""
City population: blocks are cut into lots, lots run a style's grammar, and
the leftover space is meshed as ground, road corridors and trees.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import Mapping, Optional, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon, box

from . import geometry as geo
from .errors import ConfigError, GrammarError, SplitError, SynthCityError
from .grammar import derive, parse_grammar
from .grammar.ast import Op, Program
from .mesh import DEFAULT_MATERIAL, Label, LabeledMesh, Material, MeshBuilder
from .rng import check_seed, derive_seed, stream
from .roadnet import CityBlock, RoadConfig, RoadGraph, extract_blocks, generate_roads

log = logging.getLogger(__name__)

STYLE_IDS = tuple("abcdefghi")
DEFAULT_STYLES = ("a", "b", "c", "g", "h", "i")
LOT_SETBACK_M = 2.0
MIN_BLOCK_AREA = 1e-6
CANOPY_DIAMETER_M = (3.0, 8.0)
TREE_SEGMENTS = 8


@dataclass(frozen=True)
class StyleConfig:
    id: str
    grammar: Program
    palette: Mapping[str, Material]
    building_prob: float = 0.8
    tree_density: float = 10.0  # trees per hectare of open ground
    road_material: str = "road"
    ground_material: str = "ground"
    min_lot_area_m2: float = 800.0
    roads: Mapping = field(default_factory=dict)  # preferred street layout

    def __post_init__(self):
        if not 0.0 <= self.building_prob <= 1.0:
            raise ConfigError(f"building_prob must lie in [0, 1], got {self.building_prob}", "building_prob")
        if not self.tree_density >= 0:
            raise ConfigError(f"tree_density must be >= 0, got {self.tree_density}", "tree_density")
        if not self.min_lot_area_m2 > 0:
            raise ConfigError("min_lot_area_m2 must be positive", "min_lot_area_m2")
        for key in ("road_material", "ground_material"):
            if getattr(self, key) not in self.palette:
                raise ConfigError(f"{key} {getattr(self, key)!r} is not in the palette", key)
        for name in texture_names(self.grammar):
            if name not in self.palette:
                raise ConfigError(f"grammar uses texture {name!r} missing from the palette", "palette")

    def material(self, key) -> Material:
        return self.palette.get(key, DEFAULT_MATERIAL)


def texture_names(program: Program) -> set:
    out = set()

    def walk(body):
        for item in body:
            if isinstance(item, Op):
                if item.name == "texture":
                    out.add(item.args[0].name)
                for br in item.branches or ():
                    walk(br.body)

    for r in program.rules:
        for alt in r.alternatives:
            walk(alt.body)
    return out


def _presets() -> dict:
    return json.loads(resources.files(__package__).joinpath("styles/presets.json").read_text())


def load_style(style_id: str, **overrides) -> StyleConfig:
    """One of the shipped presets ``a``..``i``; keyword arguments override fields."""
    presets = _presets()
    if style_id not in presets:
        raise ConfigError(f"unknown style {style_id!r}; choose from {', '.join(sorted(presets))}", "style")
    p = dict(presets[style_id])
    text = resources.files(__package__).joinpath(f"styles/{style_id}.sg").read_text(encoding="utf-8")
    palette = {k: Material.from_spec(k, v) for k, v in p.pop("palette").items()}
    p.pop("name", None)
    p.update(overrides)
    return StyleConfig(id=style_id, grammar=parse_grammar(text), palette=palette, **p)


def style_from_files(style_id: str, grammar_path, palette: Mapping, **fields) -> StyleConfig:
    with open(grammar_path, encoding="utf-8") as fh:
        program = parse_grammar(fh.read())
    mats = {k: v if isinstance(v, Material) else Material.from_spec(k, v) for k, v in palette.items()}
    return StyleConfig(id=style_id, grammar=program, palette=mats, **fields)


# lots

def _shapely_pieces(geom):
    out = []
    for g in getattr(geom, "geoms", [geom]):
        if g.geom_type == "Polygon":
            if g.area > 0:
                out.append(g)
        elif hasattr(g, "geoms"):
            out.extend(_shapely_pieces(g))
    return out


def _halves(poly: Polygon, origin, axis, other, at, span):
    """Cut ``poly`` by the line ``origin + at*axis + t*other``."""
    lo = origin + at * axis
    a = [lo - span * other, lo + span * other, lo + span * other - span * axis, lo - span * other - span * axis]
    b = [lo - span * other, lo + span * other, lo + span * other + span * axis, lo - span * other + span * axis]
    return _shapely_pieces(poly.intersection(Polygon(a))), _shapely_pieces(poly.intersection(Polygon(b)))


def subdivide_block(block, min_area_m2: float, seed: int, split_at: Optional[float] = None,
                    warnings: Optional[list] = None, max_depth: int = 32) -> list:
    """Recursive long-axis splitting of a block into lots (CCW vertex arrays).

    Each cut is perpendicular to the longer side of the piece's oriented
    bounding box, at a uniform position in [0.4, 0.6] of that side (or at
    ``split_at`` when given). Pieces at or above twice ``min_area_m2`` are
    split again.
    """
    if not min_area_m2 > 0:
        raise ValueError("min_area_m2 must be positive")
    pts = getattr(block, "boundary", block)
    pts = geo.as_poly(pts)
    area = geo.polygon_area(pts)
    if area < MIN_BLOCK_AREA:
        msg = f"degenerate block skipped (area {area:.3g} m^2)"
        log.warning(msg)
        if warnings is not None:
            warnings.append(msg)
        return []
    rng = stream(seed, "lots")
    todo = [(Polygon(pts), 0)]
    lots = []
    while todo:
        poly, depth = todo.pop()
        if poly.area < 2.0 * min_area_m2 or depth >= max_depth:
            lots.append(poly)
            continue
        ring = np.asarray(poly.exterior.coords)[:-1]
        origin, axes, size = geo.oriented_bbox(ring)
        t = split_at if split_at is not None else rng.uniform(0.4, 0.6)
        span = 4.0 * (size[0] + size[1]) + 1.0
        left, right = _halves(poly, origin, axes[0], axes[1], t * size[0], span)
        # push right first so the left half is processed (and numbered) first
        for piece in reversed(left + right):
            todo.append((piece, depth + 1))
    out = []
    for g in lots:
        ring = geo.remove_collinear(np.asarray(g.exterior.coords)[:-1])
        if len(ring) >= 3:
            out.append(geo.ensure_ccw(ring))
    return out


# meshing helpers

def triangulate_region(geom, z=0.0) -> np.ndarray:
    """(T, 3, 3) triangles covering a shapely (multi)polygon, holes allowed."""
    if geom is None or geom.is_empty:
        return np.zeros((0, 3, 3))
    tris = []
    for g in _shapely_pieces(geom):
        g = shapely.set_precision(g, 0.0) if not g.is_valid else g
        simple = len(g.interiors) == 0
        if simple:
            ring = geo.remove_collinear(np.asarray(g.exterior.coords)[:-1])
            if len(ring) >= 3 and geo.is_simple(ring):
                tris.append(geo.ear_clip(ring))
                continue
        cdt = shapely.get_coordinates(shapely.constrained_delaunay_triangles(g)).reshape(-1, 4, 2)[:, :3]
        cw = geo.cross2(cdt[:, 1] - cdt[:, 0], cdt[:, 2] - cdt[:, 0]) < 0
        cdt[cw] = cdt[cw][:, ::-1]
        tris.append(cdt)
    if not tris:
        return np.zeros((0, 3, 3))
    t2 = np.concatenate(tris)
    return np.concatenate([t2, np.full(t2.shape[:2] + (1,), float(z))], axis=2)


def footprint_of(mesh: LabeledMesh):
    """Union of the ground projections of a mesh's non-vertical triangles."""
    t = mesh.triangles
    if len(t) == 0:
        return Polygon()
    e1 = t[:, 1, :2] - t[:, 0, :2]
    e2 = t[:, 2, :2] - t[:, 0, :2]
    flat = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) > 1e-9
    polys = shapely.polygons(t[flat][:, :, :2])
    return shapely.union_all(polys)


def tree_mesh(x, y, canopy_d, height, canopy_mat, trunk_mat, builder: MeshBuilder):
    r = canopy_d / 2.0
    base = height * 0.3
    ang = np.linspace(0.0, 2 * math.pi, TREE_SEGMENTS, endpoint=False)
    ring = np.stack([x + r * np.cos(ang), y + r * np.sin(ang), np.full(TREE_SEGMENTS, base)], axis=1)
    apex = np.array([x, y, height])
    nxt = np.roll(ring, -1, axis=0)
    cone = np.stack([ring, nxt, np.broadcast_to(apex, ring.shape)], axis=1)
    center = np.array([x, y, base])
    under = np.stack([nxt, ring, np.broadcast_to(center, ring.shape)], axis=1)
    builder.add(np.concatenate([cone, under]), Label.VEGETATION, canopy_mat)
    tr = 0.25
    tr_ring = np.stack([x + tr * np.cos(ang[::2]), y + tr * np.sin(ang[::2])], axis=1)
    a = tr_ring
    b = np.roll(tr_ring, -1, axis=0)
    z0, z1 = np.zeros(len(a)), np.full(len(a), base)
    a0, b0 = np.column_stack([a, z0]), np.column_stack([b, z0])
    a1, b1 = np.column_stack([a, z1]), np.column_stack([b, z1])
    trunk = np.concatenate([np.stack([a0, b0, b1], 1), np.stack([a0, b1, a1], 1)])
    builder.add(trunk, Label.VEGETATION, trunk_mat)


def scatter_trees(region, density_per_ha, rng, style: StyleConfig, builder: MeshBuilder) -> int:
    """Poisson number of trees whose canopy disk lies inside ``region``."""
    if density_per_ha <= 0 or region is None or region.is_empty:
        return 0
    n = int(rng.poisson(density_per_ha * region.area / 10_000.0))
    if n == 0:
        return 0
    minx, miny, maxx, maxy = region.bounds
    placed = 0
    shrunk = {}
    for _ in range(n):
        d = rng.uniform(*CANOPY_DIAMETER_M)
        h = rng.uniform(1.2, 2.0) * d
        key = round(d * 2) / 2  # reuse eroded regions at 0.5 m steps
        if key not in shrunk:
            shrunk[key] = region.buffer(-(key / 2.0 + 0.26), join_style="mitre")
            shapely.prepare(shrunk[key])
        inner = shrunk[key]
        if inner.is_empty:
            continue
        xs = rng.uniform(minx, maxx, 16)
        ys = rng.uniform(miny, maxy, 16)
        ok = np.flatnonzero(shapely.contains_xy(inner, xs, ys))
        if len(ok) == 0:
            continue
        # canopy diameter is drawn on a finer grid than the erosion key; clamp to it
        tree_mesh(xs[ok[0]], ys[ok[0]], min(d, key), h, style.material("tree"), style.material("trunk"), builder)
        placed += 1
    return placed


# scene

@dataclass(frozen=True, eq=False)
class Scene:
    meshes: tuple  # (buildings, ground, roads, vegetation) LabeledMesh
    extent_m: tuple
    style_id: str
    world_seed: int
    footprints: tuple = ()  # (instance id, shapely polygon) per building
    errors: tuple = ()  # per-lot failure records
    timings: Mapping = field(default_factory=dict)

    @cached_property
    def mesh(self) -> LabeledMesh:
        return LabeledMesh.concat(self.meshes)

    @property
    def n_buildings(self) -> int:
        return len(self.footprints)

    def class_area(self, label) -> float:
        return self.mesh.projected_area([label])

    def to_bytes(self) -> bytes:
        """Canonical serialization used for determinism checks."""
        head = json.dumps({"extent_m": list(self.extent_m), "style_id": self.style_id,
                           "world_seed": self.world_seed, "errors": list(self.errors)},
                          sort_keys=True).encode()
        parts = [head]
        for m in self.meshes:
            for arr in (m.triangles, m.material, m.label, m.instance):
                parts.append(np.ascontiguousarray(arr).tobytes())
            parts.append(repr(m.materials).encode())
        return b"\x00".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def write_obj(self, path) -> None:
        """Wavefront OBJ with one group per semantic class and flat-color materials."""
        m = self.mesh
        lines = [f"# style {self.style_id} seed {self.world_seed}"]
        mtl = {}
        k = 1
        for label in Label:
            sel = np.flatnonzero(m.label == label)
            if len(sel) == 0:
                continue
            lines.append(f"g {label.name.lower()}")
            current = None
            for t in sel:
                mat = m.materials[m.material[t]]
                name = f"{mat.name}_{mtl.setdefault(mat, len(mtl))}"
                if name != current:
                    lines.append(f"usemtl {name}")
                    current = name
                for v in m.triangles[t]:
                    lines.append(f"v {v[0]:.4f} {v[1]:.4f} {v[2]:.4f}")
                lines.append(f"f {k} {k + 1} {k + 2}")
                k += 3
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def _corridors(graph: Optional[RoadGraph]):
    if graph is None or graph.n_edges == 0:
        return Polygon()
    lines = [LineString(s).buffer(w / 2.0, cap_style="round", join_style="round", quad_segs=4)
             for s, w in zip(graph.segments(), graph.widths)]
    return shapely.union_all(lines)


def populate(blocks: Sequence[CityBlock], style: StyleConfig, world_seed: int,
             roads: Optional[RoadGraph] = None, extent_m=None, setback_m: float = LOT_SETBACK_M,
             split_at: Optional[float] = None) -> Scene:
    """Fill ``blocks`` with lots, buildings, ground and trees; mesh the streets.

    ``extent_m`` defaults to the road graph's extent. Space outside all
    blocks is Road where it lies within half a street width of a street
    centerline and Ground elsewhere.
    """
    world_seed = check_seed(world_seed)
    if extent_m is None:
        extent_m = roads.extent_m if roads is not None else (0.0, 0.0)
    extent_m = tuple(float(v) for v in np.broadcast_to(np.asarray(extent_m, float), (2,)))
    t0 = time.perf_counter()
    bld, gnd, veg = MeshBuilder(), MeshBuilder(), MeshBuilder()
    ground_mat = style.material(style.ground_material)
    footprints, errors = [], []
    block_polys = []
    instance = 0
    for bi, block in enumerate(blocks):
        warnings = []
        lots = subdivide_block(block, style.min_lot_area_m2, derive_seed(world_seed, "block", bi),
                               split_at=split_at, warnings=warnings)
        errors.extend({"block": bi, "lot": None, "error": w} for w in warnings)
        if not lots:
            continue
        bpoly = Polygon(block.boundary if hasattr(block, "boundary") else block)
        if not bpoly.is_valid:
            bpoly = shapely.make_valid(bpoly)
        block_polys.append(bpoly)
        taken = []
        for li, lot in enumerate(lots):
            rng = stream(world_seed, "lot", bi, li)
            lot_poly = Polygon(lot)
            fp = Polygon()
            if rng.random() < style.building_prob:
                try:
                    mesh = _build_lot(lot, style, derive_seed(world_seed, "lot", bi, li, "grammar"), setback_m)
                except (GrammarError, SplitError, SynthCityError, ValueError) as exc:
                    errors.append({"block": bi, "lot": li, "error": f"{type(exc).__name__}: {exc}"})
                    mesh = None
                if mesh is not None and len(mesh):
                    instance += 1
                    fp = footprint_of(mesh)
                    bld.add_mesh(mesh, instance)
                    footprints.append((instance, fp))
                    taken.append(fp)
            open_ground = lot_poly.difference(fp) if not fp.is_empty else lot_poly
            scatter_trees(open_ground, style.tree_density, rng, style, veg)
        rest = bpoly.difference(shapely.union_all(taken)) if taken else bpoly
        gnd.add(triangulate_region(rest), Label.GROUND, ground_mat)
    t1 = time.perf_counter()
    road_mesh = LabeledMesh.empty()
    if extent_m[0] > 0 and extent_m[1] > 0:
        world = box(0.0, 0.0, *extent_m)
        outside = world.difference(shapely.union_all(block_polys)) if block_polys else world
        corridor = _corridors(roads)
        road_area = outside.intersection(corridor) if not corridor.is_empty else Polygon()
        outer = outside.difference(road_area) if not road_area.is_empty else outside
        rb = MeshBuilder()
        rb.add(triangulate_region(road_area), Label.ROAD, style.material(style.road_material))
        road_mesh = rb.build()
        gnd.add(triangulate_region(outer), Label.GROUND, ground_mat)
        scatter_trees(outer, style.tree_density, stream(world_seed, "trees", "outer"), style, veg)
    t2 = time.perf_counter()
    return Scene(
        meshes=(bld.build(), gnd.build(), road_mesh, veg.build()),
        extent_m=extent_m, style_id=style.id, world_seed=world_seed,
        footprints=tuple(footprints), errors=tuple(errors),
        timings={"lots_s": t1 - t0, "roads_mesh_s": t2 - t1},
    )


def _build_lot(lot, style: StyleConfig, seed: int, setback_m: float) -> Optional[LabeledMesh]:
    buildable = geo.offset_polygon(lot, setback_m) if setback_m > 0 else lot
    if buildable is None:
        return None
    return derive(buildable, style.grammar, seed, style.palette)


# worlds

@dataclass(frozen=True)
class WorldConfig:
    extent_m: tuple = (1000.0, 1000.0)
    roads: Optional[RoadConfig] = None  # None: the style's preferred layout
    style: str = "a"
    seed: int = 0
    setback_m: float = LOT_SETBACK_M

    def __post_init__(self):
        ext = tuple(float(v) for v in np.broadcast_to(np.asarray(self.extent_m, float), (2,)))
        object.__setattr__(self, "extent_m", ext)
        object.__setattr__(self, "seed", check_seed(self.seed))
        if min(ext) <= 0:
            raise ConfigError("extent_m must be positive", "extent_m")
        if self.setback_m < 0:
            raise ConfigError("setback_m must be >= 0", "setback_m")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "WorldConfig":
        from .schemas import WORLD_SCHEMA, validate

        validate(doc, WORLD_SCHEMA)
        doc = dict(doc)
        roads = doc.pop("roads", None)
        if roads is not None:
            roads = dict(roads)
            roads.setdefault("extent_m", doc.get("extent_m", cls.extent_m))
            if "topology" in roads and isinstance(roads["topology"], dict):
                roads["topology"] = dict(roads["topology"])
            for k in ("extent_m", "districts", "widths"):
                if k in roads and isinstance(roads[k], list):
                    roads[k] = tuple(roads[k])
            roads = RoadConfig(**roads)
        if isinstance(doc.get("extent_m"), list):
            doc["extent_m"] = tuple(doc["extent_m"])
        return cls(roads=roads, **doc)

    def to_dict(self) -> dict:
        d = {"extent_m": list(self.extent_m), "style": self.style, "seed": self.seed,
             "setback_m": self.setback_m}
        if self.roads is not None:
            r = dataclasses.asdict(self.roads)
            r["extent_m"] = list(r["extent_m"])
            r["widths"] = list(r["widths"])
            if r["districts"] is None:
                del r["districts"]
            else:
                r["districts"] = list(r["districts"])
            if r["rings"] is None:
                del r["rings"]
            d["roads"] = r
        return d

    def road_config(self, style: Optional[StyleConfig] = None) -> RoadConfig:
        road_seed = derive_seed(self.seed, "roads")
        if self.roads is not None:
            return dataclasses.replace(self.roads, extent_m=self.extent_m, seed=road_seed)
        prefs = dict(style.roads) if style is not None else {}
        return RoadConfig(extent_m=self.extent_m, seed=road_seed, **prefs)


def build_world(config: WorldConfig, style: Optional[StyleConfig] = None) -> Scene:
    """generate_roads -> extract_blocks -> subdivide/populate, timed per stage."""
    style = style or load_style(config.style)
    t0 = time.perf_counter()
    graph = generate_roads(config.road_config(style))
    t1 = time.perf_counter()
    blocks = extract_blocks(graph)
    t2 = time.perf_counter()
    scene = populate(blocks, style, config.seed, roads=graph, extent_m=config.extent_m,
                     setback_m=config.setback_m)
    t3 = time.perf_counter()
    timings = {"roads_s": t1 - t0, "blocks_s": t2 - t1, "populate_s": t3 - t2, "total_s": t3 - t0}
    timings.update(scene.timings)
    return dataclasses.replace(scene, timings=timings)
