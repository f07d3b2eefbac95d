"""
Nadir tile rendering: camera planning for a target ground sample distance,
a z-buffered scanline-free triangle rasterizer, flat Lambert shading and
per-pixel class/instance buffers.

Pixel convention: pixel column i, row-from-south j samples the world point
``bounds.min + (i + 0.5, j + 0.5) * g``. Images are stored north-up, so
image row r holds j = W - 1 - r.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidFov
from .mesh import BUILDING_LABELS, Label, LabeledMesh

log = logging.getLogger(__name__)

MODES = ("orthographic", "perspective")
DEFAULT_GSD = 0.3
DEFAULT_IMAGE_PX = 572
ORTHO_HEIGHT_M = 1000.0
AMBIENT = 0.35
BACKGROUND_RGB = (0.45, 0.45, 0.40)
SHADOW_FACTOR = 0.55
SHADOW_BIAS_M = 1.0


@dataclass(frozen=True)
class CameraSpec:
    mode: str = "orthographic"
    center_xy: tuple = (0.0, 0.0)
    height_m: float = ORTHO_HEIGHT_M
    fov_deg: Optional[float] = None
    image_px: int = DEFAULT_IMAGE_PX
    gsd_m: float = DEFAULT_GSD
    sun_azimuth_deg: float = 135.0  # clockwise from north
    sun_elevation_deg: float = 45.0
    shadows: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"camera mode must be one of {MODES}, got {self.mode!r}")
        if not self.image_px > 0 or not self.gsd_m > 0:
            raise ValueError("image_px and gsd_m must be positive")
        object.__setattr__(self, "center_xy", tuple(float(v) for v in self.center_xy))

    @property
    def footprint_m(self) -> float:
        return self.image_px * self.gsd_m

    @property
    def bounds(self) -> tuple:
        """(xmin, ymin, xmax, ymax) of the ground footprint."""
        half = self.footprint_m / 2.0
        cx, cy = self.center_xy
        return (cx - half, cy - half, cx + half, cy + half)

    def at(self, center_xy) -> "CameraSpec":
        return dataclasses.replace(self, center_xy=tuple(center_xy))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["center_xy"] = list(self.center_xy)
        return d


def gsd(cam: CameraSpec) -> float:
    """Ground sample distance implied by the camera geometry."""
    if cam.mode == "perspective":
        return 2.0 * cam.height_m * math.tan(math.radians(cam.fov_deg) / 2.0) / cam.image_px
    return cam.gsd_m


def plan_camera(g: float, W: int, mode: str = "orthographic", fov_deg: Optional[float] = None,
                center_xy=(0.0, 0.0), **kw) -> CameraSpec:
    """Camera whose nadir footprint samples the ground at ``g`` m/pixel.

    Perspective cameras fly at h = W*g / (2*tan(fov/2)); orthographic
    cameras simply cover W*g meters.
    """
    if not g > 0 or not W > 0:
        raise ValueError("gsd and image width must be positive")
    if mode not in MODES:
        raise ValueError(f"camera mode must be one of {MODES}, got {mode!r}")
    if mode == "perspective":
        if fov_deg is None or not math.isfinite(fov_deg) or not 0.0 < fov_deg < 180.0:
            raise InvalidFov(f"field of view must lie in (0, 180) degrees, got {fov_deg}")
        h = W * g / (2.0 * math.tan(math.radians(fov_deg) / 2.0))
        return CameraSpec("perspective", center_xy, h, float(fov_deg), int(W), float(g), **kw)
    if fov_deg is not None and not 0.0 < fov_deg < 180.0:
        raise InvalidFov(f"field of view must lie in (0, 180) degrees, got {fov_deg}")
    return CameraSpec("orthographic", center_xy, ORTHO_HEIGHT_M, None, int(W), float(g), **kw)


@dataclass(frozen=True, eq=False)
class IdBuffer:
    classes: np.ndarray  # (W, W) uint8, north-up
    instance: np.ndarray  # (W, W) int32

    def __eq__(self, other):
        return (isinstance(other, IdBuffer) and np.array_equal(self.classes, other.classes)
                and np.array_equal(self.instance, other.instance))


@dataclass(frozen=True, eq=False)
class Tile:
    rgb: np.ndarray  # (W, W, 3) uint8
    ids: IdBuffer
    meta: dict = field(default_factory=dict)

    @property
    def mask(self) -> np.ndarray:
        return extract_mask(self.ids)

    def __iter__(self):
        # allows ``rgb, ids = render_tile(...)``
        return iter((self.rgb, self.ids))


def extract_mask(ids) -> np.ndarray:
    """255 where the class is Building or Roof, 0 elsewhere."""
    classes = ids.classes if isinstance(ids, IdBuffer) else np.asarray(ids)
    return np.where(np.isin(classes, [int(c) for c in BUILDING_LABELS]), 255, 0).astype(np.uint8)


# rasterization

def rasterize(uv: np.ndarray, keys: np.ndarray, width: int, height: int):
    """Z-buffer rasterization in pixel space.

    ``uv`` (T, 3, 2) holds vertex positions in pixel units (pixel (i, j) is
    sampled at (i + 0.5, j + 0.5)); ``keys`` (T, 3) is a depth key that is
    affine over each triangle in pixel space, larger meaning nearer. Sample
    points on an edge count as inside. Returns (key buffer, triangle index
    buffer with -1 for background), both indexed [j, i]. Ties keep the
    earlier triangle.
    """
    zbuf = np.full((height, width), -np.inf)
    idx = np.full((height, width), -1, dtype=np.int64)
    uv = np.asarray(uv, dtype=float)
    keys = np.asarray(keys, dtype=float)
    if len(uv) == 0:
        return zbuf, idx
    # inclusive pixel ranges whose centers may touch the triangle, clipped to the image
    lo = np.maximum(np.floor(uv.min(axis=1) - 0.5).astype(np.int64), 0)
    hi = np.minimum(np.ceil(uv.max(axis=1) - 0.5).astype(np.int64), [width - 1, height - 1])
    a = uv[:, 0]
    b = uv[:, 1]
    c = uv[:, 2]
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    live = (lo[:, 0] <= hi[:, 0]) & (lo[:, 1] <= hi[:, 1]) & (np.abs(area) > 1e-12)
    for t in np.flatnonzero(live):
        i0, j0 = lo[t]
        i1, j1 = hi[t]
        px = np.arange(i0, i1 + 1) + 0.5
        py = (np.arange(j0, j1 + 1) + 0.5)[:, None]
        (ax, ay), (bx, by), (cx, cy) = a[t], b[t], c[t]
        s = 1.0 if area[t] > 0 else -1.0
        w0 = s * ((cx - bx) * (py - by) - (cy - by) * (px - bx))
        w1 = s * ((ax - cx) * (py - cy) - (ay - cy) * (px - cx))
        w2 = s * ((bx - ax) * (py - ay) - (by - ay) * (px - ax))
        tol = -1e-9 * abs(area[t])
        inside = (w0 >= tol) & (w1 >= tol) & (w2 >= tol)
        if not inside.any():
            continue
        k0, k1, k2 = keys[t]
        depth = (w0 * k0 + w1 * k1 + w2 * k2) / abs(area[t])
        zs = zbuf[j0:j1 + 1, i0:i1 + 1]
        upd = inside & (depth > zs)
        zs[upd] = depth[upd]
        idx[j0:j1 + 1, i0:i1 + 1][upd] = t
    return zbuf, idx


def project(cam: CameraSpec, pts: np.ndarray):
    """World points (..., 3) to pixel coordinates (..., 2) and depth keys (...)."""
    xmin, ymin, _, _ = cam.bounds
    g = cam.gsd_m
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    if cam.mode == "perspective":
        cx, cy = cam.center_xy
        s = cam.height_m / (cam.height_m - z)
        x = cx + (x - cx) * s
        y = cy + (y - cy) * s
        key = 1.0 / (cam.height_m - z)
    else:
        key = z
    return np.stack([(x - xmin) / g, (y - ymin) / g], axis=-1), key


def _triangles_for(cam: CameraSpec, mesh: LabeledMesh):
    tris = mesh.triangles
    if cam.mode == "perspective":
        ok = (tris[:, :, 2] < cam.height_m * 0.999).all(axis=1)
    else:
        ok = np.ones(len(tris), bool)
    uv, key = project(cam, tris)
    W = cam.image_px
    lo = uv.min(axis=1)
    hi = uv.max(axis=1)
    ok &= (hi[:, 0] >= 0) & (hi[:, 1] >= 0) & (lo[:, 0] <= W) & (lo[:, 1] <= W)
    sel = np.flatnonzero(ok)
    return sel, uv[sel], key[sel]


def sun_vector(cam: CameraSpec) -> np.ndarray:
    az = math.radians(cam.sun_azimuth_deg)
    el = math.radians(cam.sun_elevation_deg)
    return np.array([math.sin(az) * math.cos(el), math.cos(az) * math.cos(el), math.sin(el)])


def _normals(tris):
    n = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    ln = np.linalg.norm(n, axis=1, keepdims=True)
    return n / np.where(ln > 0, ln, 1.0)


def _shadow_mask(cam, mesh, world_pts, valid):
    """True where a pixel's surface point is hidden from the sun."""
    s = sun_vector(cam)
    up = np.array([0.0, 0.0, 1.0])
    u = np.cross(up, s)
    if np.linalg.norm(u) < 1e-9:
        return np.zeros(valid.shape, bool)
    u /= np.linalg.norm(u)
    v = np.cross(s, u)
    tris = mesh.triangles
    reach = tris[:, :, 2].max() / max(math.tan(math.radians(cam.sun_elevation_deg)), 1e-3)
    xmin, ymin, xmax, ymax = cam.bounds
    near = ((tris[:, :, 0].max(1) >= xmin - reach) & (tris[:, :, 0].min(1) <= xmax + reach)
            & (tris[:, :, 1].max(1) >= ymin - reach) & (tris[:, :, 1].min(1) <= ymax + reach))
    tris = tris[near]
    if len(tris) == 0:
        return np.zeros(valid.shape, bool)
    g = cam.gsd_m
    pu, pv = tris @ u, tris @ v
    q = world_pts[valid]
    qu, qv = q @ u, q @ v
    # an occluder projects onto its receiver's (u, v), so the map only needs
    # to span the receivers; the rasterizer clips everything else
    u0, v0 = qu.min() - g, qv.min() - g
    wdt = int(math.ceil((qu.max() - u0) / g)) + 2
    hgt = int(math.ceil((qv.max() - v0) / g)) + 2
    if wdt * hgt > 16 * cam.image_px ** 2:
        log.warning("shadow map too large; shadows skipped for this tile")
        return np.zeros(valid.shape, bool)
    uv = np.stack([(pu - u0) / g, (pv - v0) / g], axis=-1)
    smap, _ = rasterize(uv, tris @ s, wdt, hgt)
    ii = np.clip(((qu - u0) / g).astype(np.int64), 0, wdt - 1)
    jj = np.clip(((qv - v0) / g).astype(np.int64), 0, hgt - 1)
    out = np.zeros(valid.shape, bool)
    out[valid] = smap[jj, ii] > q @ s + SHADOW_BIAS_M
    return out


def render_tile(scene, cam: CameraSpec) -> Tile:
    """Render one nadir tile of ``scene`` (a Scene or a LabeledMesh).

    Returns a Tile that unpacks as ``(rgb, ids)``. A camera footprint that
    misses the scene extent yields an all-Ground tile flagged in ``meta``.
    """
    mesh = scene.mesh if hasattr(scene, "mesh") else scene
    W = cam.image_px
    meta = {"bounds": list(cam.bounds), "camera": cam.to_dict(), "warnings": []}
    if hasattr(scene, "style_id"):
        meta["style_id"] = scene.style_id
        meta["world_seed"] = scene.world_seed
        ext = scene.extent_m
        xmin, ymin, xmax, ymax = cam.bounds
        if xmax <= 0 or ymax <= 0 or xmin >= ext[0] or ymin >= ext[1]:
            meta["warnings"].append("camera footprint does not intersect the scene extent")
    sel, uv, key = _triangles_for(cam, mesh)
    zbuf, idx = rasterize(uv, key, W, W)
    hit = idx >= 0
    classes = np.full((W, W), int(Label.GROUND), np.uint8)
    instance = np.zeros((W, W), np.int32)
    tri = sel[idx[hit]]
    classes[hit] = mesh.label[tri]
    instance[hit] = mesh.instance[tri]

    rgb = np.empty((W, W, 3))
    rgb[:] = BACKGROUND_RGB
    if hit.any():
        tris = mesh.triangles
        n = _normals(tris[sel])
        # two-sided lighting: face normals toward the camera
        n[n[:, 2] < 0] *= -1.0
        shade = AMBIENT + (1.0 - AMBIENT) * np.clip(n @ sun_vector(cam), 0.0, None)
        base = np.array([m.rgb for m in mesh.materials]) if mesh.materials else np.zeros((1, 3))
        stripe = np.array([m.stripe_rgb or m.rgb for m in mesh.materials]) if mesh.materials else base
        period = np.array([m.stripe_period_m for m in mesh.materials]) if mesh.materials else np.zeros(1)

        xmin, ymin, _, _ = cam.bounds
        g = cam.gsd_m
        rows, cols = np.nonzero(hit)
        px = xmin + (cols + 0.5) * g
        py = ymin + (rows + 0.5) * g
        kz = zbuf[rows, cols]
        if cam.mode == "perspective":
            pz = cam.height_m - 1.0 / kz
            f = (cam.height_m - pz) / cam.height_m
            cx, cy = cam.center_xy
            px, py = cx + (px - cx) * f, cy + (py - cy) * f
        else:
            pz = kz
        local = idx[rows, cols]
        mat = mesh.material[sel[local]]
        col = base[mat]
        per = period[mat]
        steep = np.abs(n[local, 2]) < 0.5
        coord = np.where(steep, pz, px)
        band = (per > 0) & (np.floor(coord / np.where(per > 0, per / 2.0, 1.0)) % 2 == 1)
        col = np.where(band[:, None], stripe[mat], col)
        lit = col * shade[local][:, None]
        if cam.shadows:
            pts = np.zeros((W, W, 3))
            pts[rows, cols] = np.column_stack([px, py, pz])
            dark = _shadow_mask(cam, mesh, pts, hit)[rows, cols]
            lit = np.where(dark[:, None], lit * SHADOW_FACTOR, lit)
        rgb[rows, cols] = lit
    rgb8 = np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)
    ids = IdBuffer(classes[::-1].copy(), instance[::-1].copy())
    return Tile(rgb8[::-1].copy(), ids, meta)


def _render_job(args):
    scene, cam = args
    return render_tile(scene, cam)


def render_tiles(scene, cams: Sequence[CameraSpec], workers: int = 1) -> list:
    """Render several tiles; output is independent of the worker count."""
    if workers <= 1 or len(cams) <= 1:
        return [render_tile(scene, c) for c in cams]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_render_job, [(scene, c) for c in cams]))
