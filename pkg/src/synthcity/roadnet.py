"""
Street networks: generation (raster / radial / organic / mixed districts),
planarity checking, and city-block extraction by half-edge face tracing.

World frame: x east, y north, origin at the south-west corner, meters.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import geometry as geo
from .errors import EmptyNetwork, PlanarityViolation
from .rng import check_seed, stream

log = logging.getLogger(__name__)

TOPOLOGIES = ("raster", "radial", "organic")
ARTERIAL_WIDTH = 12.0
LOCAL_WIDTH = 6.0
WIDTHS = {"arterial": ARTERIAL_WIDTH, "local": LOCAL_WIDTH}


@dataclass(frozen=True)
class RoadConfig:
    """Parameters for :func:`generate_roads`.

    ``topology`` is one of ``raster``, ``radial``, ``organic`` or a mapping of
    those names to positive weights, in which case the extent is cut into
    ``districts`` rectangles and each draws its own topology.
    """

    topology: Union[str, Mapping[str, float]] = "raster"
    extent_m: tuple = (1000.0, 1000.0)
    spacing_m: float = 120.0
    jitter: float = 0.0
    seed: int = 0
    rings: Optional[int] = None
    spokes: int = 8
    districts: Optional[tuple] = None
    arterial_every: int = 4
    widths: tuple = (ARTERIAL_WIDTH, LOCAL_WIDTH)

    def __post_init__(self):
        ext = tuple(float(v) for v in np.broadcast_to(np.asarray(self.extent_m, float), (2,)))
        object.__setattr__(self, "extent_m", ext)
        object.__setattr__(self, "seed", check_seed(self.seed))
        if isinstance(self.topology, Mapping):
            topo = {str(k): float(v) for k, v in self.topology.items()}
            bad = [k for k in topo if k not in TOPOLOGIES]
            if bad:
                raise ValueError(f"unknown topology {bad[0]!r}")
            if not topo or any(v < 0 for v in topo.values()) or sum(topo.values()) <= 0:
                raise ValueError("topology weights must be non-negative with a positive sum")
            object.__setattr__(self, "topology", dict(sorted(topo.items())))
        elif self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        if min(ext) <= 0:
            raise ValueError("extent_m must be positive in both axes")
        if self.spacing_m <= 0:
            raise ValueError("spacing_m must be positive")
        if not 0 <= self.jitter < 0.5:
            raise ValueError("jitter must lie in [0, 0.5)")
        if self.spokes < 3:
            raise ValueError("radial networks need at least 3 spokes")
        if self.rings is not None and self.rings < 1:
            raise ValueError("rings must be >= 1")

    @property
    def snap_m(self) -> float:
        return self.spacing_m / 4.0


@dataclass(frozen=True)
class RoadGraph:
    nodes: np.ndarray  # (N, 2)
    edges: np.ndarray  # (E, 2) node indices
    widths: np.ndarray  # (E,)
    classes: tuple  # per edge, "arterial" | "local"
    extent_m: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "widths", np.asarray(self.widths, dtype=float).reshape(-1))
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def segments(self) -> np.ndarray:
        return self.nodes[self.edges]

    def components(self) -> np.ndarray:
        """Connected-component label for every node."""
        parent = list(range(self.n_nodes))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for u, v in self.edges:
            ru, rv = find(int(u)), find(int(v))
            if ru != rv:
                parent[max(ru, rv)] = min(ru, rv)
        roots = [find(i) for i in range(self.n_nodes)]
        _, labels = np.unique(roots, return_inverse=True)
        return labels.astype(np.int64)

    def to_lines(self) -> str:
        """Debug export: one edge per line ``x1 y1 x2 y2 width class``."""
        out = []
        for (u, v), w, c in zip(self.edges, self.widths, self.classes):
            (x1, y1), (x2, y2) = self.nodes[u], self.nodes[v]
            out.append(" ".join(repr(float(v)) for v in (x1, y1, x2, y2, w)) + f" {c}")
        return "\n".join(out) + ("\n" if out else "")

    @classmethod
    def from_lines(cls, text: str, extent_m=(0.0, 0.0)) -> "RoadGraph":
        index = {}
        nodes, edges, widths, classes = [], [], [], []

        def node(x, y):
            key = (x, y)
            if key not in index:
                index[key] = len(nodes)
                nodes.append(key)
            return index[key]

        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            x1, y1, x2, y2, w, c = line.split()
            edges.append((node(float(x1), float(y1)), node(float(x2), float(y2))))
            widths.append(float(w))
            classes.append(c)
        return cls(np.array(nodes, float).reshape(-1, 2), np.array(edges, np.int64).reshape(-1, 2),
                   np.array(widths, float), tuple(classes), tuple(extent_m))


@dataclass(frozen=True)
class CityBlock:
    boundary: np.ndarray  # (n, 2) counter-clockwise
    face: tuple = ()  # node cycle of the street face it was cut from

    def __post_init__(self):
        object.__setattr__(self, "boundary", geo.as_poly(self.boundary))

    @property
    def area_m2(self) -> float:
        return geo.signed_area(self.boundary)


@dataclass
class ValidationReport:
    crossings: list = field(default_factory=list)
    duplicates: list = field(default_factory=list)
    zero_length: list = field(default_factory=list)
    outside: list = field(default_factory=list)
    n_components: int = 0
    euler: list = field(default_factory=list)  # per component (V, E, F incl. outer)

    @property
    def planar(self) -> bool:
        return not self.crossings

    @property
    def connected(self) -> bool:
        return self.n_components <= 1

    @property
    def euler_ok(self) -> bool:
        return all(v - e + f == 2 for v, e, f in self.euler)

    @property
    def ok(self) -> bool:
        return (self.planar and not self.duplicates and not self.zero_length
                and not self.outside and self.euler_ok)

    def summary(self) -> str:
        lines = [
            f"planarity     {'pass' if self.planar else 'FAIL ' + str(self.crossings[:3])}",
            f"duplicates    {'pass' if not self.duplicates else 'FAIL ' + str(self.duplicates[:3])}",
            f"zero-length   {'pass' if not self.zero_length else 'FAIL ' + str(self.zero_length[:3])}",
            f"in extent     {'pass' if not self.outside else 'FAIL ' + str(self.outside[:3])}",
            f"components    {self.n_components}",
        ]
        for i, (v, e, f) in enumerate(self.euler):
            lines.append(f"euler[{i}]      {v} - {e} + {f} = {v - e + f}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# planarity


def find_crossings(graph: RoadGraph, eps=geo.EPS, first_only=False) -> list:
    """Edge pairs that touch anywhere other than a shared endpoint.

    Sweep over edges sorted by their minimum x, comparing each edge only with
    edges whose x-interval overlaps.
    """
    seg = graph.segments()
    if len(seg) < 2:
        return []
    lo = seg.min(axis=1)
    hi = seg.max(axis=1)
    order = np.argsort(lo[:, 0], kind="stable")
    lo_s, hi_s = lo[order], hi[order]
    tol = eps * max(1.0, float(np.abs(graph.nodes).max(initial=1.0)))
    found = []
    e = graph.edges
    for a in range(len(order)):
        stop = np.searchsorted(lo_s[:, 0], hi_s[a, 0] + tol, side="right")
        cand = np.arange(a + 1, stop)
        if len(cand) == 0:
            continue
        ov = (lo_s[cand, 1] <= hi_s[a, 1] + tol) & (hi_s[cand, 1] >= lo_s[a, 1] - tol)
        i = int(order[a])
        for b in cand[ov]:
            j = int(order[b])
            shared = len({int(e[i, 0]), int(e[i, 1])} & {int(e[j, 0]), int(e[j, 1])})
            if shared == 1 and e[i, 0] == e[i, 1]:
                continue
            if geo.edges_conflict(seg[i, 0], seg[i, 1], seg[j, 0], seg[j, 1], shared, eps):
                found.append((min(i, j), max(i, j)))
                if first_only:
                    return found
    return sorted(found)


def duplicate_edges(graph: RoadGraph) -> list:
    seen = {}
    dups = []
    for i, (u, v) in enumerate(graph.edges):
        key = (min(u, v), max(u, v))
        if key in seen:
            dups.append((seen[key], i))
        else:
            seen[key] = i
    return dups


# --------------------------------------------------------------------------
# faces


def _rotation_system(graph: RoadGraph):
    nbrs = defaultdict(list)
    for u, v in graph.edges:
        u, v = int(u), int(v)
        nbrs[u].append(v)
        nbrs[v].append(u)
    rot = {}
    pos = {}
    for v, ns in nbrs.items():
        d = graph.nodes[ns] - graph.nodes[v]
        ang = np.arctan2(d[:, 1], d[:, 0])
        order = [ns[k] for k in np.argsort(ang, kind="stable")]
        rot[v] = order
        pos.update({(v, w): k for k, w in enumerate(order)})
    return rot, pos


def trace_faces(graph: RoadGraph):
    """Trace every face of the embedding.

    Each half-edge u->v is followed by v->w where w precedes u in the
    counter-clockwise neighbour order of v, keeping the face on the left.
    Returns ``(faces, outer)``: node cycles, and a parallel list of flags
    marking the single outer face of each connected component.
    """
    rot, pos = _rotation_system(graph)
    comp = graph.components()
    visited = set()
    faces = []
    for u, v in graph.edges:
        for start in ((int(u), int(v)), (int(v), int(u))):
            if start in visited:
                continue
            cyc = []
            he = start
            while he not in visited:
                visited.add(he)
                a, b = he
                cyc.append(a)
                ring = rot[b]
                w = ring[pos[(b, a)] - 1]
                he = (b, w)
            faces.append(tuple(cyc))
    outer = [False] * len(faces)
    best = {}
    for k, f in enumerate(faces):
        c = int(comp[f[0]])
        area = geo.signed_area(graph.nodes[list(f)])
        if c not in best or area < best[c][0]:
            best[c] = (area, k)
    for _, k in best.values():
        outer[k] = True
    return faces, outer


def interior_faces(graph: RoadGraph) -> list:
    faces, outer = trace_faces(graph)
    return [f for f, o in zip(faces, outer) if not o]


def extract_blocks(graph: RoadGraph, check=True, miter_limit=4.0) -> list:
    """Interior faces of the street graph, shrunk by half the road widths."""
    if check:
        hit = find_crossings(graph, first_only=True)
        if hit:
            i, j = hit[0]
            raise PlanarityViolation(tuple(graph.edges[i]), tuple(graph.edges[j]),
                                     f"edges {i} and {j} cross")
    edge_w = {}
    for (u, v), w in zip(graph.edges, graph.widths):
        edge_w[(int(u), int(v))] = edge_w[(int(v), int(u))] = float(w)
    blocks = []
    for face in interior_faces(graph):
        pts = graph.nodes[list(face)]
        dist = np.array([edge_w[(face[k], face[(k + 1) % len(face)])] / 2.0
                         for k in range(len(face))])
        poly = geo.offset_polygon(pts, dist, miter_limit)
        if poly is not None:
            blocks.append(CityBlock(poly, face))
            continue
        for piece in _offset_fallback(pts, dist):
            blocks.append(CityBlock(piece, face))
    return blocks


def _offset_fallback(pts, dist):
    """Boolean-difference inset for faces whose mitered offset self-intersects."""
    import shapely
    from shapely.geometry import LineString, Polygon

    region = shapely.make_valid(Polygon(pts))
    n = len(pts)
    roads = shapely.union_all([
        LineString([pts[k], pts[(k + 1) % n]]).buffer(dist[k], cap_style="flat", join_style="mitre")
        for k in range(n) if dist[k] > 0
    ])
    rest = region.difference(roads) if not roads.is_empty else region
    out = []
    for g in getattr(rest, "geoms", [rest]):
        if g.geom_type != "Polygon" or g.area <= 1e-6 or len(g.interiors):
            continue
        ring = np.asarray(g.exterior.coords)[:-1]
        poly = geo.ensure_ccw(geo.remove_collinear(ring))
        if len(poly) >= 3 and geo.is_simple(poly):
            out.append(poly)
    return out


def validate_graph(graph: RoadGraph) -> ValidationReport:
    rep = ValidationReport()
    rep.crossings = find_crossings(graph)
    rep.duplicates = duplicate_edges(graph)
    seg = graph.segments()
    if len(seg):
        ln = np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1)
        rep.zero_length = [int(i) for i in np.flatnonzero(ln <= geo.EPS)]
    w, h = graph.extent_m
    if w > 0 and h > 0:
        tol = 1e-9 * max(w, h)
        bad = ((graph.nodes[:, 0] < -tol) | (graph.nodes[:, 0] > w + tol)
               | (graph.nodes[:, 1] < -tol) | (graph.nodes[:, 1] > h + tol))
        rep.outside = [int(i) for i in np.flatnonzero(bad)]
    comp = graph.components()
    used = np.zeros(graph.n_nodes, bool)
    used[graph.edges.reshape(-1)] = True
    rep.n_components = int(len(np.unique(comp))) if graph.n_nodes else 0
    if rep.crossings or rep.duplicates or rep.zero_length:
        return rep
    faces, outer = trace_faces(graph)
    nf = defaultdict(int)
    for f in faces:
        nf[int(comp[f[0]])] += 1
    for c in range(rep.n_components):
        v = int(np.count_nonzero(comp == c))
        e = int(np.count_nonzero(comp[graph.edges[:, 0]] == c)) if graph.n_edges else 0
        f = nf.get(c, 0)
        if e == 0:
            f = 1  # isolated vertex: only the outer face
        rep.euler.append((v, e, f))
    return rep


# --------------------------------------------------------------------------
# incremental planar construction


class PlanarBuilder:
    """Grows a straight-line planar graph while keeping it planar.

    New segments are routed through existing nodes within ``snap`` of the
    path and split existing edges where they cross them. All nodes stay at
    least ``snap`` apart.
    """

    def __init__(self, snap: float):
        self.snap = float(snap)
        self._pos = np.zeros((64, 2))
        self.n = 0
        self.edges: dict = {}  # (i, j) with i < j -> (width, cls)
        self.adj = defaultdict(set)
        self._seg_cache = None

    @property
    def pos(self) -> np.ndarray:
        return self._pos[: self.n]

    def add_node(self, pt) -> int:
        if self.n == len(self._pos):
            self._pos = np.vstack([self._pos, np.zeros_like(self._pos)])
        self._pos[self.n] = pt
        self.n += 1
        return self.n - 1

    def node_near(self, pt, r=None, exclude=()) -> Optional[int]:
        if self.n == 0:
            return None
        r = self.snap if r is None else r
        d = np.linalg.norm(self.pos - np.asarray(pt, float), axis=1)
        for x in exclude:
            d[x] = np.inf
        k = int(np.argmin(d))
        return k if d[k] <= r else None

    def _segments(self):
        if self._seg_cache is None:
            keys = list(self.edges)
            idx = np.array(keys, dtype=np.int64).reshape(-1, 2)
            self._seg_cache = (keys, idx, self.pos[idx] if len(keys) else np.zeros((0, 2, 2)))
        return self._seg_cache

    def _add_edge(self, i, j, width, cls):
        key = (min(i, j), max(i, j))
        if key in self.edges:
            w0, c0 = self.edges[key]
            if width > w0:
                self.edges[key] = (width, cls)
            return
        self.edges[key] = (width, cls)
        self.adj[i].add(j)
        self.adj[j].add(i)
        self._seg_cache = None

    def _remove_edge(self, key):
        del self.edges[key]
        i, j = key
        self.adj[i].discard(j)
        self.adj[j].discard(i)
        self._seg_cache = None

    def split_edge(self, key, pt) -> int:
        w, c = self.edges[key]
        k = self.add_node(pt)
        self._remove_edge(key)
        self._add_edge(key[0], k, w, c)
        self._add_edge(k, key[1], w, c)
        return k

    def conflicts(self, a: int, b: int) -> bool:
        """Would edge a-b violate planarity?"""
        keys, idx, seg = self._segments()
        if not keys:
            return False
        p, q = self.pos[a], self.pos[b]
        lo = np.minimum(p, q) - 1e-6
        hi = np.maximum(p, q) + 1e-6
        near = np.all(seg.min(axis=1) <= hi, axis=1) & np.all(seg.max(axis=1) >= lo, axis=1)
        for k in np.flatnonzero(near):
            i, j = idx[k]
            shared = len({a, b} & {int(i), int(j)})
            if shared == 2:
                continue  # same edge: merged, not a crossing
            if geo.edges_conflict(p, q, seg[k, 0], seg[k, 1], shared):
                return True
        return False

    def connect(self, a, b, width, cls) -> bool:
        if a == b:
            return False
        if (min(a, b), max(a, b)) in self.edges:
            self._add_edge(a, b, width, cls)
            return True
        if self.conflicts(a, b):
            return False
        self._add_edge(a, b, width, cls)
        return True

    def _events(self, cur, P, q):
        """Obstacles along P->q: nearby nodes and crossed edges, by path parameter."""
        d = q - P
        L2 = float(d @ d)
        ev = []
        if self.n:
            rel = self.pos - P
            t = rel @ d / L2
            tc = np.clip(t, 0.0, 1.0)
            dist = np.linalg.norm(rel - tc[:, None] * d, axis=1)
            dist[cur] = np.inf
            for k in np.flatnonzero((dist <= self.snap) & (t > 0)):
                ev.append((float(tc[k]), 0, int(k), None))
        keys, idx, seg = self._segments()
        if keys:
            lo = np.minimum(P, q) - self.snap
            hi = np.maximum(P, q) + self.snap
            near = np.all(seg.min(axis=1) <= hi, axis=1) & np.all(seg.max(axis=1) >= lo, axis=1)
            for k in np.flatnonzero(near):
                i, j = int(idx[k, 0]), int(idx[k, 1])
                if cur in (i, j):
                    continue
                if not geo.segments_intersect(P, q, seg[k, 0], seg[k, 1]):
                    continue
                tu = geo.segment_intersection(P, q, seg[k, 0], seg[k, 1])
                if tu is None:
                    # collinear overlap: the nearer endpoint is a node event already
                    continue
                t, u = tu
                x = seg[k, 0] + min(1.0, max(0.0, u)) * (seg[k, 1] - seg[k, 0])
                ev.append((min(1.0, max(0.0, t)), 1, keys[k], x))
        ev.sort(key=lambda e: (e[0], e[1]))
        return ev

    def _nearest_edge(self, pt, exclude_node):
        keys, idx, seg = self._segments()
        best = None
        for k in range(len(keys)):
            if exclude_node in keys[k]:
                continue
            dd = geo.point_segment_distance(pt, seg[k, 0], seg[k, 1])
            if dd <= self.snap and (best is None or dd < best[0]):
                best = (dd, keys[k])
        return best[1] if best else None

    def _resolve_point(self, pt, key=None) -> int:
        """Node for ``pt``: an existing node within snap, a split of ``key``, or new."""
        k = self.node_near(pt)
        if k is not None:
            return k
        if key is not None:
            a, b = self.pos[key[0]], self.pos[key[1]]
            d = b - a
            t = float((np.asarray(pt) - a) @ d / (d @ d))
            proj = a + min(1.0, max(0.0, t)) * d
            return self.split_edge(key, proj)
        return self.add_node(pt)

    def insert(self, a: int, q, width: float, cls: str, max_steps=64):
        """Route a street from node ``a`` toward point ``q``.

        Returns ``(end_node, fresh)`` where ``fresh`` says the end node was
        created at ``q`` itself, or ``(None, False)`` when routing failed.
        """
        q = np.asarray(q, dtype=float)
        cur = a
        for _ in range(max_steps):
            P = self.pos[cur].copy()
            if np.linalg.norm(q - P) <= self.snap:
                return cur, False
            ev = self._events(cur, P, q)
            fresh = False
            if not ev:
                key = self._nearest_edge(q, cur)
                if key is not None:
                    target = self._resolve_point(q, key)
                else:
                    target = self.node_near(q)
                    if target is None:
                        target = self.add_node(q)
                        fresh = True
                done = True
            else:
                t, kind, obj, x = ev[0]
                if kind == 0:
                    target = obj
                else:
                    target = self._resolve_point(x, obj)
                done = t >= 1.0 or np.linalg.norm(self.pos[target] - q) <= self.snap
            if target == cur:
                return None, False
            if not self.connect(cur, target, width, cls):
                return None, False
            if done:
                return target, fresh
            cur = target
        return None, False

    def insert_segment(self, p, q, width, cls):
        a = self.node_near(p)
        if a is None:
            key = self._nearest_edge(p, -1)
            a = self._resolve_point(p, key)
        return self.insert(a, q, width, cls)

    def to_graph(self, extent) -> RoadGraph:
        keys = sorted(self.edges)
        used = sorted({i for k in keys for i in k})
        remap = {old: new for new, old in enumerate(used)}
        nodes = self.pos[used] if used else np.zeros((0, 2))
        edges = np.array([(remap[i], remap[j]) for i, j in keys], dtype=np.int64).reshape(-1, 2)
        widths = np.array([self.edges[k][0] for k in keys], dtype=float)
        classes = tuple(self.edges[k][1] for k in keys)
        return RoadGraph(nodes, edges, widths, classes, tuple(extent))


# --------------------------------------------------------------------------
# generators


def _cells(length, spacing):
    n = int(math.floor(length / spacing + 1e-9))
    return n


def _raster(cfg: RoadConfig, origin, size, rng):
    w, h = size
    nx, ny = _cells(w, cfg.spacing_m), _cells(h, cfg.spacing_m)
    if nx < 1 or ny < 1:
        raise EmptyNetwork(f"extent {w}x{h} m cannot fit one {cfg.spacing_m} m interval")
    xs = np.linspace(0.0, w, nx + 1)
    ys = np.linspace(0.0, h, ny + 1)
    gx, gy = np.meshgrid(xs, ys)  # row-major: j over y, i over x
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    if cfg.jitter > 0:
        step = np.array([w / nx, h / ny])
        disp = rng.uniform(-1.0, 1.0, size=pts.shape) * (cfg.jitter * 0.5) * step
        ii = np.tile(np.arange(nx + 1), ny + 1)
        jj = np.repeat(np.arange(ny + 1), nx + 1)
        disp[(ii == 0) | (ii == nx), 0] = 0.0
        disp[(jj == 0) | (jj == ny), 1] = 0.0
        pts = pts + disp
    pts = pts + np.asarray(origin)
    ae = max(1, cfg.arterial_every)
    edges, classes = [], []
    nid = lambda i, j: j * (nx + 1) + i  # noqa: E731
    for j in range(ny + 1):
        for i in range(nx):
            edges.append((nid(i, j), nid(i + 1, j)))
            classes.append("arterial" if j % ae == 0 or j == ny else "local")
    for j in range(ny):
        for i in range(nx + 1):
            edges.append((nid(i, j), nid(i, j + 1)))
            classes.append("arterial" if i % ae == 0 or i == nx else "local")
    return pts, edges, classes


def _radial(cfg: RoadConfig, origin, size, rng):
    w, h = size
    rmax = min(w, h) / 2.0
    rings = cfg.rings if cfg.rings is not None else _cells(rmax, cfg.spacing_m)
    if rings < 1 or rings * cfg.spacing_m > rmax + 1e-9:
        raise EmptyNetwork(f"extent {w}x{h} m cannot fit a ring of radius {cfg.spacing_m} m")
    S = cfg.spokes
    base = rng.uniform(0.0, 2.0 * math.pi) if cfg.jitter > 0 else 0.0
    jit = rng.uniform(-1.0, 1.0, S) * cfg.jitter * 0.5 * (math.pi / S) if cfg.jitter > 0 else np.zeros(S)
    ang = base + 2.0 * math.pi * np.arange(S) / S + jit
    nxt = np.roll(ang, -1)
    nxt[-1] += 2.0 * math.pi
    sector = nxt - ang
    center = np.asarray(origin) + np.array([w / 2.0, h / 2.0])
    pts = [center]
    edges, classes = [], []
    prev_spoke = [0] * S
    for k in range(1, rings + 1):
        r = k * cfg.spacing_m
        # subdivide arcs so this ring's chords clear the previous ring
        m = 1
        if k > 1:
            need = (k - 1) / k * (1.0 + 1e-3)
            while math.cos(sector.max() / (2 * m)) <= need:
                m += 1
        ring_ids = []
        spoke_ids = []
        for s in range(S):
            for t in range(m):
                a = ang[s] + sector[s] * t / m
                if t == 0:
                    spoke_ids.append(len(pts))
                ring_ids.append(len(pts))
                pts.append(center + r * np.array([math.cos(a), math.sin(a)]))
        for s in range(S):
            edges.append((prev_spoke[s], spoke_ids[s]))
            classes.append("arterial")
        ring_cls = "arterial" if k == rings or k % max(1, cfg.arterial_every) == 0 else "local"
        for t in range(len(ring_ids)):
            edges.append((ring_ids[t], ring_ids[(t + 1) % len(ring_ids)]))
            classes.append(ring_cls)
        prev_spoke = spoke_ids
    return np.array(pts), edges, classes


class _ValueNoise:
    """Bilinear value noise on a lattice with smoothstep interpolation."""

    def __init__(self, rng, cell, size):
        self.cell = cell
        nx = int(size[0] / cell) + 3
        ny = int(size[1] / cell) + 3
        self.grid = rng.random((ny, nx))

    def __call__(self, p):
        x = p[0] / self.cell + 1.0
        y = p[1] / self.cell + 1.0
        ny, nx = self.grid.shape
        i = min(max(int(math.floor(x)), 0), nx - 2)
        j = min(max(int(math.floor(y)), 0), ny - 2)
        fx, fy = x - i, y - j
        sx = fx * fx * (3 - 2 * fx)
        sy = fy * fy * (3 - 2 * fy)
        g = self.grid
        top = g[j, i] * (1 - sx) + g[j, i + 1] * sx
        bot = g[j + 1, i] * (1 - sx) + g[j + 1, i + 1] * sx
        return top * (1 - sy) + bot * sy


def _clip_to_rect(P, q, lo, hi):
    """Largest t in [0, 1] keeping P + t(q - P) inside the rectangle."""
    t = 1.0
    d = q - P
    for ax in range(2):
        if d[ax] > 0 and q[ax] > hi[ax]:
            t = min(t, (hi[ax] - P[ax]) / d[ax])
        elif d[ax] < 0 and q[ax] < lo[ax]:
            t = min(t, (lo[ax] - P[ax]) / d[ax])
    return max(0.0, t)


def _organic(cfg: RoadConfig, origin, size, rng, builder: PlanarBuilder):
    lo = np.asarray(origin, float)
    hi = lo + np.asarray(size, float)
    w_art, w_loc = cfg.widths
    widths = {"arterial": w_art, "local": w_loc}
    sp = cfg.spacing_m
    if min(size) < sp:
        raise EmptyNetwork(f"extent {size[0]}x{size[1]} m cannot fit one {sp} m interval")
    noise = _ValueNoise(rng, 3.0 * sp, size)
    start = lo + np.asarray(size) / 2.0 + rng.uniform(-0.1, 0.1, 2) * sp
    a0 = builder.node_near(start)
    if a0 is None:
        a0 = builder.add_node(start)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    fronts = deque([(a0, theta, "arterial"), (a0, theta + math.pi, "arterial")])
    max_nodes = builder.n + int(2.5 * size[0] * size[1] / (sp * sp)) + 8
    max_turn = 0.5 + cfg.jitter
    steps = 0
    reseeds = 0
    while builder.n < max_nodes and steps < 40 * max_nodes:
        if not fronts:
            # restart from a random street node with spare valence
            cand = [k for k in range(builder.n) if 1 <= len(builder.adj[k]) <= 2
                    and np.all((builder.pos[k] > lo) & (builder.pos[k] < hi))]
            reseeds += 1
            if not cand or reseeds > max_nodes:
                break
            k = cand[int(rng.integers(len(cand)))]
            nb = next(iter(builder.adj[k]))
            d = builder.pos[k] - builder.pos[nb]
            base = math.atan2(d[1], d[0]) + (math.pi / 2) * (1 if rng.random() < 0.5 else -1)
            fronts.append((k, base, "local"))
        steps += 1
        node, th, cls = fronts.popleft()
        P = builder.pos[node].copy()
        th2 = th + (noise(P - lo) - 0.5) * 2.0 * max_turn
        L = sp * rng.uniform(0.75, 1.25)
        q = P + L * np.array([math.cos(th2), math.sin(th2)])
        t = _clip_to_rect(P, q, lo, hi)
        at_edge = t < 1.0
        q = P + t * (q - P)
        if np.linalg.norm(q - P) < builder.snap:
            continue
        end, fresh = builder.insert(node, q, widths[cls], cls)
        if end is None or not fresh or at_edge:
            continue
        if rng.random() < 0.92:
            fronts.append((end, th2, cls))
        for side in (1.0, -1.0):
            if rng.random() < 0.42:
                turn = side * (math.pi / 2 + rng.normal(0.0, 0.15))
                fronts.append((end, th2 + turn, "local"))


def _direct_graph(pts, edges, classes, widths, extent):
    w = np.array([widths[c] for c in classes], dtype=float)
    return RoadGraph(pts, np.array(edges, dtype=np.int64).reshape(-1, 2), w, tuple(classes), tuple(extent))


def _largest_component(graph: RoadGraph) -> RoadGraph:
    if graph.n_edges == 0:
        return graph
    comp = graph.components()
    ecomp = comp[graph.edges[:, 0]]
    counts = np.bincount(ecomp)
    keep_c = int(np.argmax(counts))
    ek = ecomp == keep_c
    used = np.unique(graph.edges[ek].reshape(-1))
    remap = -np.ones(graph.n_nodes, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return RoadGraph(graph.nodes[used], remap[graph.edges[ek]], graph.widths[ek],
                     tuple(c for c, k in zip(graph.classes, ek) if k), graph.extent_m)


def _repair(graph: RoadGraph) -> RoadGraph:
    """Drop the later edge of any crossing pair (safety net after snapping)."""
    drop = set()
    while True:
        keep = np.array([i not in drop for i in range(graph.n_edges)], bool)
        sub = RoadGraph(graph.nodes, graph.edges[keep], graph.widths[keep],
                        tuple(c for c, k in zip(graph.classes, keep) if k), graph.extent_m)
        hits = find_crossings(sub, first_only=True)
        if not hits:
            break
        live = np.flatnonzero(keep)
        drop.add(int(live[hits[0][1]]))
        log.debug("dropped crossing edge %d", int(live[hits[0][1]]))
    return sub


def generate_roads(config: RoadConfig) -> RoadGraph:
    """Build a planar street graph for ``config``; deterministic in the config."""
    cfg = config
    extent = cfg.extent_m
    widths = dict(zip(("arterial", "local"), cfg.widths))
    if isinstance(cfg.topology, str):
        rng = stream(cfg.seed, "roads", cfg.topology)
        if cfg.topology == "raster":
            pts, edges, classes = _raster(cfg, (0.0, 0.0), extent, rng)
            return _direct_graph(pts, edges, classes, widths, extent)
        if cfg.topology == "radial":
            pts, edges, classes = _radial(cfg, (0.0, 0.0), extent, rng)
            return _direct_graph(pts, edges, classes, widths, extent)
        b = PlanarBuilder(cfg.snap_m)
        _organic(cfg, (0.0, 0.0), extent, rng, b)
        graph = b.to_graph(extent)
    else:
        graph = _combined(cfg)
    graph = _largest_component(_repair(graph))
    if graph.n_edges == 0:
        raise EmptyNetwork("generation produced no streets")
    return graph


def district_plan(cfg: RoadConfig):
    """District rectangles ``(origin, size, topology)`` for a weighted topology."""
    w, h = cfg.extent_m
    if cfg.districts is not None:
        dx, dy = (int(v) for v in cfg.districts)
    else:
        dx = min(3, max(1, int(round(w / (4.0 * cfg.spacing_m)))))
        dy = min(3, max(1, int(round(h / (4.0 * cfg.spacing_m)))))
    names = [k for k, v in cfg.topology.items() if v > 0]
    p = np.array([cfg.topology[k] for k in names], dtype=float)
    p /= p.sum()
    rng = stream(cfg.seed, "districts")
    plan = []
    for j in range(dy):
        for i in range(dx):
            topo = names[int(rng.choice(len(names), p=p))]
            origin = (w * i / dx, h * j / dy)
            size = (w / dx, h / dy)
            plan.append((origin, size, topo))
    return plan


def _combined(cfg: RoadConfig) -> RoadGraph:
    b = PlanarBuilder(cfg.snap_m)
    widths = dict(zip(("arterial", "local"), cfg.widths))
    organic = []
    for k, (origin, size, topo) in enumerate(district_plan(cfg)):
        rng = stream(cfg.seed, "district", k, topo)
        if topo == "organic":
            organic.append((k, origin, size))
            continue
        try:
            if topo == "raster":
                pts, edges, classes = _raster(cfg, origin, size, rng)
            else:
                pts, edges, classes = _radial(cfg, origin, size, rng)
        except EmptyNetwork:
            continue
        for (u, v), c in zip(edges, classes):
            b.insert_segment(pts[u], pts[v], widths[c], c)
    # organic districts grow last so they stitch onto their neighbours' streets
    for k, origin, size in organic:
        try:
            _organic(cfg, origin, size, stream(cfg.seed, "district", k, "organic"), b)
        except EmptyNetwork:
            continue
    return b.to_graph(cfg.extent_m)
