"""
Planar geometry primitives: orientation tests, segment intersection,
polygon area/simplicity, ear-clipping triangulation, mitered inward offset
and oriented bounding boxes.

Polygons are ``(n, 2)`` float arrays without a repeated closing vertex.
"""

from __future__ import annotations

import math

import numpy as np

EPS = 1e-9


def as_poly(points) -> np.ndarray:
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(p) > 1 and np.allclose(p[0], p[-1], rtol=0.0, atol=1e-12):
        p = p[:-1]
    return p


def signed_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    # shoelace, shifted to the first vertex for precision far from the origin
    x = x - x[0]
    y = y - y[0]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(poly) -> float:
    return abs(signed_area(poly))


def ensure_ccw(poly) -> np.ndarray:
    p = as_poly(poly)
    return p[::-1].copy() if signed_area(p) < 0 else p


def perimeter(poly) -> float:
    p = np.asarray(poly, dtype=float)
    return float(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1).sum())


def cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def orient(a, b, c) -> float:
    """Twice the signed area of triangle abc (> 0 when counter-clockwise)."""
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        return float(np.linalg.norm(p - a))
    t = min(1.0, max(0.0, float((p - a) @ d) / dd))
    return float(np.linalg.norm(p - (a + t * d)))


def segments_intersect(p1, p2, q1, q2, eps=EPS) -> bool:
    """Closed-segment intersection test (touching counts)."""
    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    lp = math.dist(p1, p2)
    lq = math.dist(q1, q2)
    tq = eps * max(lq, 1.0)
    tp = eps * max(lp, 1.0)
    if ((d1 > tq and d2 < -tq) or (d1 < -tq and d2 > tq)) and (
        (d3 > tp and d4 < -tp) or (d3 < -tp and d4 > tp)
    ):
        return True
    return (
        (abs(d1) <= tq and _on_segment(p1, q1, q2, eps))
        or (abs(d2) <= tq and _on_segment(p2, q1, q2, eps))
        or (abs(d3) <= tp and _on_segment(q1, p1, p2, eps))
        or (abs(d4) <= tp and _on_segment(q2, p1, p2, eps))
    )


def _on_segment(p, a, b, eps) -> bool:
    return point_segment_distance(p, a, b) <= eps * max(1.0, math.dist(a, b))


def edges_conflict(p1, p2, q1, q2, shared: int, eps=EPS) -> bool:
    """Whether two graph edges violate planarity.

    ``shared`` is the number of endpoints the edges have in common (by node
    identity). Edges sharing one endpoint conflict only if they overlap
    collinearly; edges sharing none conflict on any contact.
    """
    if shared >= 2:
        return True
    if shared == 0:
        return segments_intersect(p1, p2, q1, q2, eps)
    # identify the shared vertex and test the free ends
    if np.allclose(p1, q1) or np.allclose(p1, q2):
        common, free_p = p1, p2
    else:
        common, free_p = p2, p1
    free_q = q2 if np.allclose(common, q1) else q1
    return _on_segment(free_p, common, free_q, eps) or _on_segment(free_q, common, free_p, eps)


def segment_intersection(p1, p2, q1, q2):
    """Parameters (t, u) where p1 + t(p2-p1) == q1 + u(q2-q1), or None if parallel."""
    r = np.subtract(p2, p1)
    s = np.subtract(q2, q1)
    den = float(cross2(r, s))
    if abs(den) < 1e-15 * max(1.0, float(r @ r), float(s @ s)):
        return None
    qp = np.subtract(q1, p1)
    t = float(cross2(qp, s)) / den
    u = float(cross2(qp, r)) / den
    return t, u


def point_in_polygon(pt, poly) -> bool:
    """Even-odd ray casting; boundary points are unspecified."""
    x, y = float(pt[0]), float(pt[1])
    p = np.asarray(poly, dtype=float)
    xs, ys = p[:, 0], p[:, 1]
    xn, yn = np.roll(xs, -1), np.roll(ys, -1)
    cond = (ys > y) != (yn > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = xs + (y - ys) * (xn - xs) / (yn - ys)
    return bool(np.count_nonzero(cond & (x < xint)) % 2)


def points_in_polygon(pts, poly) -> np.ndarray:
    """Vectorised even-odd test for many points."""
    pts = np.asarray(pts, dtype=float)
    p = np.asarray(poly, dtype=float)
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    xs, ys = p[:, 0][None, :], p[:, 1][None, :]
    xn, yn = np.roll(xs, -1, axis=1), np.roll(ys, -1, axis=1)
    cond = (ys > y) != (yn > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = xs + (y - ys) * (xn - xs) / (yn - ys)
    return (np.count_nonzero(cond & (x < xint), axis=1) % 2).astype(bool)


def dedupe(poly, tol=1e-9) -> np.ndarray:
    """Drop consecutive duplicate vertices (cyclically)."""
    p = as_poly(poly)
    if len(p) < 2:
        return p
    keep = np.linalg.norm(p - np.roll(p, 1, axis=0), axis=1) > tol
    if not keep.any():
        return p[:1]
    return p[keep]


def remove_collinear(poly, tol=1e-9) -> np.ndarray:
    p = dedupe(poly)
    changed = True
    while changed and len(p) > 3:
        changed = False
        prev = np.roll(p, 1, axis=0)
        nxt = np.roll(p, -1, axis=0)
        c = cross2(p - prev, nxt - p)
        scale = np.linalg.norm(p - prev, axis=1) * np.linalg.norm(nxt - p, axis=1)
        dots = np.einsum("ij,ij->i", p - prev, nxt - p)
        flat = (np.abs(c) <= tol * np.maximum(scale, 1e-300)) & (dots > 0)
        if flat.any():
            i = int(np.flatnonzero(flat)[0])
            p = np.delete(p, i, axis=0)
            changed = True
    return p


def is_simple(poly, eps=EPS) -> bool:
    """True when no two non-adjacent edges touch and adjacent edges don't fold back."""
    p = as_poly(poly)
    n = len(p)
    if n < 3:
        return False
    a = p
    b = np.roll(p, -1, axis=0)
    # adjacent edges: folding back onto each other is a self-overlap
    u = b - a
    un = np.roll(u, -1, axis=0)
    cr = cross2(u, un)
    dt = np.einsum("ij,ij->i", u, un)
    scale = np.linalg.norm(u, axis=1) * np.linalg.norm(un, axis=1)
    if np.any((np.abs(cr) <= eps * np.maximum(scale, 1e-300)) & (dt < 0)):
        return False
    if np.any(np.linalg.norm(u, axis=1) <= eps):
        return False
    if n == 3:
        return abs(signed_area(p)) > 0
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    for i in range(n):
        # candidates j > i+1, excluding the pair (0, n-1) which is adjacent
        js = np.arange(i + 2, n if i > 0 else n - 1)
        if len(js) == 0:
            continue
        ov = np.all(lo[js] <= hi[i] + eps, axis=1) & np.all(hi[js] >= lo[i] - eps, axis=1)
        for j in js[ov]:
            if segments_intersect(a[i], b[i], a[j], b[j], eps):
                return False
    return True


def _point_in_triangle_closed(pts, a, b, c, eps):
    d1 = cross2(b - a, pts - a)
    d2 = cross2(c - b, pts - b)
    d3 = cross2(a - c, pts - c)
    return (d1 >= -eps) & (d2 >= -eps) & (d3 >= -eps)


def ear_clip(poly) -> np.ndarray:
    """Triangulate a simple polygon (no holes) by ear clipping.

    Returns a ``(n-2, 3, 2)`` array of counter-clockwise triangles. Collinear
    and duplicate vertices are dropped first, so fewer triangles may result.
    """
    p = ensure_ccw(remove_collinear(poly))
    n = len(p)
    if n < 3:
        return np.zeros((0, 3, 2))
    if n == 3:
        return p[None, :, :].copy()
    idx = list(range(n))
    tris = []
    scale = max(1.0, float(np.abs(p).max()))
    eps = 1e-12 * scale * scale
    guard = 0
    while len(idx) > 3:
        m = len(idx)
        clipped = False
        for k in range(m):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = p[i0], p[i1], p[i2]
            if orient(a, b, c) <= eps:
                continue
            others = [j for j in idx if j not in (i0, i1, i2)]
            if others:
                q = p[others]
                inside = _point_in_triangle_closed(q, a, b, c, eps)
                # coincident vertices (weakly simple input) don't block the ear
                same = (
                    np.all(np.isclose(q, a, atol=1e-12), axis=1)
                    | np.all(np.isclose(q, b, atol=1e-12), axis=1)
                    | np.all(np.isclose(q, c, atol=1e-12), axis=1)
                )
                if np.any(inside & ~same):
                    continue
            tris.append((a, b, c))
            del idx[k]
            clipped = True
            break
        if not clipped:
            guard += 1
            # numerically stuck: drop the flattest vertex and keep going
            m = len(idx)
            areas = [abs(orient(p[idx[k - 1]], p[idx[k]], p[idx[(k + 1) % m]])) for k in range(m)]
            del idx[int(np.argmin(areas))]
            if guard > n:
                break
    if len(idx) == 3:
        a, b, c = (p[i] for i in idx)
        if orient(a, b, c) > 0:
            tris.append((a, b, c))
    if not tris:
        return np.zeros((0, 3, 2))
    return np.array(tris, dtype=float)


def offset_polygon(poly, distances, miter_limit=4.0):
    """Mitered inward offset of a counter-clockwise polygon.

    ``distances[i]`` is the offset of edge i (from vertex i to i+1). Convex
    corners take the exact miter point; reflex corners whose miter would
    exceed ``miter_limit`` times the offset distance are bevelled.
    Returns None when the result collapses or self-intersects.
    """
    p = as_poly(poly)
    n = len(p)
    d = np.broadcast_to(np.asarray(distances, dtype=float), (n,))
    if n < 3:
        return None
    if not np.any(d > 0):
        return p.copy() if signed_area(p) > 0 else None
    u = np.roll(p, -1, axis=0) - p
    lens = np.linalg.norm(u, axis=1)
    if np.any(lens <= EPS):
        return None
    u = u / lens[:, None]
    nrm = np.stack([-u[:, 1], u[:, 0]], axis=1)
    joints = []  # offset points per input vertex
    for i in range(n):
        ia = i - 1  # incoming edge
        ua, ub = u[ia], u[i]
        na, nb = nrm[ia], nrm[i]
        da, db = d[ia], d[i]
        v = p[i]
        pa = v + na * da
        pb = v + nb * db
        cr = float(cross2(ua, ub))
        dt = float(ua @ ub)
        if abs(cr) < 1e-12:
            if dt > 0 and abs(da - db) < 1e-12:
                joints.append([pa])
            else:
                joints.append([pa, pb])
            continue
        # intersection of pa + s*ua with pb + t*ub
        s = float(cross2(pb - pa, ub)) / cr
        x = pa + s * ua
        # reflex corners, and near-straight joints where the width changes,
        # send the miter point far away; bevel those
        if (cr < 0 or dt > 0) and np.linalg.norm(x - v) > miter_limit * max(da, db, 1e-12):
            joints.append([pa, pb])
        else:
            joints.append([x])
    # an offset edge running against its source edge has collapsed
    for i in range(n):
        seg = joints[(i + 1) % n][0] - joints[i][-1]
        if float(seg @ u[i]) < -EPS:
            return None
    q = dedupe(np.array([pt for j in joints for pt in j]))
    if len(q) < 3 or signed_area(q) <= 1e-9:
        return None
    if not is_simple(q):
        return None
    return q


def convex_hull(points) -> np.ndarray:
    """Monotone-chain hull, counter-clockwise, no repeated endpoint."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
    if len(pts) <= 2:
        return np.array(pts, dtype=float)

    def half(seq):
        h = []
        for q in seq:
            while len(h) >= 2 and orient(h[-2], h[-1], q) <= 0:
                h.pop()
            h.append(q)
        return h

    lower = half(pts)
    upper = half(reversed(pts))
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def oriented_bbox(poly):
    """Minimum-area enclosing rectangle.

    Returns ``(origin, axes, size)``: ``axes`` rows are unit vectors with
    ``axes[0]`` along the longer side; every point is
    ``origin + a * axes[0] + b * axes[1]`` with 0 <= a <= size[0],
    0 <= b <= size[1].
    """
    hull = convex_hull(poly)
    best = None
    for i in range(len(hull)):
        e = hull[(i + 1) % len(hull)] - hull[i]
        ln = math.hypot(e[0], e[1])
        if ln <= EPS:
            continue
        ax = e / ln
        ay = np.array([-ax[1], ax[0]])
        a = hull @ ax
        b = hull @ ay
        area = (a.max() - a.min()) * (b.max() - b.min())
        if best is None or area < best[0] - 1e-12:
            best = (area, ax, ay, a.min(), a.max(), b.min(), b.max())
    if best is None:
        raise ValueError("degenerate polygon has no bounding box")
    _, ax, ay, a0, a1, b0, b1 = best
    size = np.array([a1 - a0, b1 - b0])
    if size[1] > size[0]:
        # make axes[0] the long side, keeping a right-handed frame
        ax, ay = ay, -ax
        a0, a1, b0, b1 = b0, b1, -a1, -a0
        size = size[::-1]
    origin = a0 * ax + b0 * ay
    return origin, np.stack([ax, ay]), size
