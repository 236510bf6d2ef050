"""3D convex hulls by quickhull, and point-in-hull tests.

Facets are triangles with unit outward normals ``n`` and offsets ``d`` so
that the hull is ``{x : n.x <= d for every facet}``.  A point counts as
inside when it violates no facet by more than ``eps``; by default ``eps``
is ``1e-6`` times the bounding-box diagonal so boundary points (hull
vertices included) are inside.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .pointcloud import PointCloud

RANK_TOL = 1e-7
CONTAIN_TOL = 1e-6
# points closer than this (relative to the bbox diagonal) to a facet plane
# are never treated as outside during construction
BUILD_TOL = 1e-10
_CHUNK = 8192


class DegenerateInput(ValueError):
    """Fewer than four points, or the points do not span three dimensions."""


@dataclass(frozen=True)
class ConvexHull3:
    vertices: np.ndarray        # (m, 3) hull vertex coordinates
    vertex_indices: np.ndarray  # (m,) rows of the input cloud, ascending
    triangles: np.ndarray       # (f, 3) input-row indices, CCW seen from outside
    normals: np.ndarray         # (f, 3) unit outward normals
    offsets: np.ndarray         # (f,)
    eps: float

    @property
    def n_facets(self) -> int:
        return len(self.offsets)

    def signed_distances(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.normals.T - self.offsets

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        out = np.empty(len(points), dtype=bool)
        for s in range(0, len(points), _CHUNK):
            chunk = points[s:s + _CHUNK]
            out[s:s + _CHUNK] = np.all(chunk @ self.normals.T - self.offsets <= self.eps, axis=1)
        return out


def _plane(a, b, c):
    n = np.cross(b - a, c - a)
    norm = np.linalg.norm(n)
    if norm == 0.0:
        return None, None
    n = n / norm
    return n, float(n @ (a + b + c)) / 3.0


def quickhull(cloud: PointCloud | np.ndarray, eps: float | None = None) -> ConvexHull3:
    pts_in = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    n = len(pts_in)
    if n < 4:
        raise DegenerateInput(f"convex hull needs at least 4 points, got {n}")
    lo, hi = pts_in.min(axis=0), pts_in.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    center = (lo + hi) / 2
    pts = pts_in - center
    rank_tol = RANK_TOL * diag
    tol = BUILD_TOL * max(diag, 1e-300)
    if eps is None:
        eps = CONTAIN_TOL * diag

    # initial simplex
    ext = np.unique(np.concatenate([pts.argmin(axis=0), pts.argmax(axis=0)]))
    dd = np.linalg.norm(pts[ext][:, None] - pts[ext][None], axis=2)
    a, b = np.unravel_index(np.argmax(dd), dd.shape)
    i0, i1 = int(ext[a]), int(ext[b])
    if dd[a, b] <= rank_tol:
        raise DegenerateInput("points are coincident")
    u = pts[i1] - pts[i0]
    u = u / np.linalg.norm(u)
    rel = pts - pts[i0]
    line_d = np.linalg.norm(rel - np.outer(rel @ u, u), axis=1)
    i2 = int(np.argmax(line_d))
    if line_d[i2] <= rank_tol:
        raise DegenerateInput("points are collinear")
    nrm, off = _plane(pts[i0], pts[i1], pts[i2])
    plane_d = pts @ nrm - off
    i3 = int(np.argmax(np.abs(plane_d)))
    if abs(plane_d[i3]) <= rank_tol:
        raise DegenerateInput("points are coplanar")

    facets: dict[int, list] = {}   # id -> [verts, normal, offset, outside idx]
    edges: dict[tuple, int] = {}   # directed edge -> owning facet id
    next_id = 0

    def add_facet(va, vb, vc):
        nonlocal next_id
        nn, oo = _plane(pts[va], pts[vb], pts[vc])
        if nn is None:
            nn, oo = np.zeros(3), 0.0
        fid = next_id
        next_id += 1
        facets[fid] = [(va, vb, vc), nn, oo, None]
        edges[(va, vb)] = fid
        edges[(vb, vc)] = fid
        edges[(vc, va)] = fid
        return fid

    simplex = [i0, i1, i2, i3]
    inner = pts[simplex].mean(axis=0)
    for tri in ((i0, i1, i2), (i0, i1, i3), (i0, i2, i3), (i1, i2, i3)):
        nn, oo = _plane(*pts[list(tri)])
        if nn @ inner - oo > 0:
            tri = (tri[0], tri[2], tri[1])
        add_facet(*tri)

    def distribute(cand, fids):
        if len(cand) == 0:
            for f in fids:
                facets[f][3] = None
            return
        N = np.array([facets[f][1] for f in fids])
        D = np.array([facets[f][2] for f in fids])
        dist = pts[cand] @ N.T - D
        best = np.argmax(dist, axis=1)
        bestd = dist[np.arange(len(cand)), best]
        keep = bestd > tol
        cand, best = cand[keep], best[keep]
        for k, f in enumerate(fids):
            sel = cand[best == k]
            facets[f][3] = sel if len(sel) else None

    others = np.setdiff1d(np.arange(n), simplex)
    distribute(others, list(facets))

    pending = deque(f for f in facets if facets[f][3] is not None)
    while pending:
        fid = pending.popleft()
        if fid not in facets or facets[fid][3] is None:
            continue
        f = facets[fid]
        outside = f[3]
        eye = int(outside[np.argmax(pts[outside] @ f[1] - f[2])])
        ep = pts[eye]

        visible = {fid}
        queue = [fid]
        while queue:
            g = facets[queue.pop()]
            va, vb, vc = g[0]
            for e in ((vb, va), (vc, vb), (va, vc)):
                h = edges.get(e)
                if h is None or h in visible:
                    continue
                if ep @ facets[h][1] - facets[h][2] > tol:
                    visible.add(h)
                    queue.append(h)

        horizon = []
        for v in visible:
            va, vb, vc = facets[v][0]
            for e in ((va, vb), (vb, vc), (vc, va)):
                if edges.get((e[1], e[0])) not in visible:
                    horizon.append(e)

        cand = [facets[v][3] for v in visible if facets[v][3] is not None]
        for v in visible:
            va, vb, vc = facets[v][0]
            for e in ((va, vb), (vb, vc), (vc, va)):
                if edges.get(e) == v:
                    del edges[e]
            del facets[v]

        new = [add_facet(ea, eb, eye) for ea, eb in horizon]
        cand = np.concatenate(cand) if cand else np.zeros(0, dtype=np.int64)
        cand = cand[cand != eye]
        distribute(cand, new)
        pending.extend(f for f in new if facets[f][3] is not None)

    tris = np.array([facets[f][0] for f in sorted(facets)], dtype=np.int64)
    normals = np.array([facets[f][1] for f in sorted(facets)])
    offsets = np.array([facets[f][2] for f in sorted(facets)]) + normals @ center
    vidx = np.unique(tris)
    return ConvexHull3(
        vertices=pts_in[vidx], vertex_indices=vidx, triangles=tris,
        normals=normals, offsets=offsets, eps=float(eps))


def contains(hull: ConvexHull3, p) -> bool:
    p = np.asarray(p, dtype=np.float64)
    return bool(np.all(hull.normals @ p - hull.offsets <= hull.eps))


def hull_restrict(source: PointCloud, hull: ConvexHull3) -> PointCloud:
    return source.subset(hull.contains_many(source.points))


def restrict_mask(source: PointCloud, hull: ConvexHull3) -> np.ndarray:
    return hull.contains_many(source.points)
