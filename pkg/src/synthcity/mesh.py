"""Labeled triangle meshes and flat-color materials."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Optional

import numpy as np

MIN_TRIANGLE_AREA = 1e-9


class Label(IntEnum):
    GROUND = 0
    BUILDING = 1
    ROOF = 2
    ROAD = 3
    VEGETATION = 4


BUILDING_LABELS = (Label.BUILDING, Label.ROOF)


@dataclass(frozen=True)
class Material:
    name: str
    rgb: tuple  # floats in [0, 1]
    stripe_rgb: Optional[tuple] = None
    stripe_period_m: float = 0.0

    @classmethod
    def from_spec(cls, name, spec) -> "Material":
        """Build from a palette entry: ``[r, g, b]`` or a dict with optional stripes."""
        if isinstance(spec, dict):
            stripe = spec.get("stripe")
            return cls(name, _rgb(spec["rgb"]),
                       _rgb(stripe["rgb"]) if stripe else None,
                       float(stripe["period_m"]) if stripe else 0.0)
        return cls(name, _rgb(spec))


def _rgb(v) -> tuple:
    v = tuple(float(c) for c in v)
    if len(v) != 3:
        raise ValueError(f"color needs three components, got {v}")
    if any(c > 1.0 for c in v):
        v = tuple(c / 255.0 for c in v)
    return tuple(min(1.0, max(0.0, c)) for c in v)


DEFAULT_MATERIAL = Material("default", (0.6, 0.6, 0.6))


def triangle_areas(tris: np.ndarray) -> np.ndarray:
    tris = np.asarray(tris, dtype=float)
    if len(tris) == 0:
        return np.zeros(0)
    c = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    return 0.5 * np.linalg.norm(c, axis=1)


@dataclass(frozen=True, eq=False)
class LabeledMesh:
    triangles: np.ndarray  # (T, 3, 3) float64
    material: np.ndarray  # (T,) index into materials
    label: np.ndarray  # (T,) uint8 Label
    instance: np.ndarray  # (T,) int32
    materials: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=float).reshape(-1, 3, 3))
        n = len(self.triangles)
        object.__setattr__(self, "material", np.asarray(self.material, dtype=np.int32).reshape(n))
        object.__setattr__(self, "label", np.asarray(self.label, dtype=np.uint8).reshape(n))
        object.__setattr__(self, "instance", np.asarray(self.instance, dtype=np.int32).reshape(n))
        object.__setattr__(self, "materials", tuple(self.materials))

    def __len__(self):
        return len(self.triangles)

    @classmethod
    def empty(cls) -> "LabeledMesh":
        return cls(np.zeros((0, 3, 3)), [], [], [], ())

    @classmethod
    def concat(cls, meshes: Iterable["LabeledMesh"]) -> "LabeledMesh":
        meshes = [m for m in meshes if len(m)]
        if not meshes:
            return cls.empty()
        table: dict = {}
        mats, tris, labels, inst = [], [], [], []
        for m in meshes:
            remap = np.array([table.setdefault(mt, len(table)) for mt in m.materials], dtype=np.int32)
            mats.append(remap[m.material] if len(remap) else m.material)
            tris.append(m.triangles)
            labels.append(m.label)
            inst.append(m.instance)
        return cls(np.concatenate(tris), np.concatenate(mats), np.concatenate(labels),
                   np.concatenate(inst), tuple(table))

    def with_instance(self, instance_id: int) -> "LabeledMesh":
        return LabeledMesh(self.triangles, self.material, self.label,
                           np.full(len(self), instance_id, np.int32), self.materials)

    def select(self, mask) -> "LabeledMesh":
        mask = np.asarray(mask)
        return LabeledMesh(self.triangles[mask], self.material[mask], self.label[mask],
                           self.instance[mask], self.materials)

    def volume(self) -> float:
        """Enclosed volume by signed tetrahedra against the origin (closed meshes only)."""
        t = self.triangles
        if len(t) == 0:
            return 0.0
        # shift to a local origin for precision
        o = t.reshape(-1, 3).mean(axis=0)
        a, b, c = t[:, 0] - o, t[:, 1] - o, t[:, 2] - o
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def projected_area(self, labels=None) -> float:
        t = self.triangles
        if labels is not None:
            t = t[np.isin(self.label, [int(x) for x in labels])]
        if len(t) == 0:
            return 0.0
        e1 = t[:, 1, :2] - t[:, 0, :2]
        e2 = t[:, 2, :2] - t[:, 0, :2]
        return float(np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]).sum() / 2.0)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.triangles, self.material, self.label, self.instance):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr(self.materials).encode())
        return h.hexdigest()


class MeshBuilder:
    """Accumulates triangles; silently drops degenerate ones."""

    def __init__(self):
        self._tris = []
        self._mat = []
        self._lab = []
        self._inst = []
        self._table: dict = {}

    def material_index(self, mat: Material) -> int:
        return self._table.setdefault(mat, len(self._table))

    def add(self, tris, label, material: Material, instance=0):
        tris = np.asarray(tris, dtype=float).reshape(-1, 3, 3)
        if len(tris) == 0:
            return
        keep = triangle_areas(tris) > MIN_TRIANGLE_AREA
        tris = tris[keep]
        if len(tris) == 0:
            return
        k = self.material_index(material)
        self._tris.append(tris)
        self._mat.append(np.full(len(tris), k, np.int32))
        self._lab.append(np.full(len(tris), int(label), np.uint8))
        self._inst.append(np.full(len(tris), instance, np.int32))

    def add_mesh(self, mesh: LabeledMesh, instance=None):
        """Append ``mesh``, optionally stamping every triangle with ``instance``."""
        if len(mesh) == 0:
            return
        remap = np.array([self.material_index(m) for m in mesh.materials], dtype=np.int32)
        inst = mesh.instance if instance is None else np.full(len(mesh), instance, np.int32)
        self._tris.append(mesh.triangles)
        self._mat.append(remap[mesh.material])
        self._lab.append(mesh.label.astype(np.uint8))
        self._inst.append(inst.astype(np.int32))

    def build(self) -> LabeledMesh:
        if not self._tris:
            return LabeledMesh.empty()
        return LabeledMesh(np.concatenate(self._tris), np.concatenate(self._mat),
                           np.concatenate(self._lab), np.concatenate(self._inst),
                           tuple(self._table))
