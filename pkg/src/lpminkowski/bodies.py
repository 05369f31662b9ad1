"""Convex bodies as halfspace polytopes and as sampled support functions."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .errors import (
    DegenerateBody,
    GeometryError,
    LengthMismatch,
    OriginNotInterior,
    UnboundedBody,
    UnsupportedDimension,
)
from .sphere import SphereGrid, build_grid

AREA_CUTOFF = 1e-12
VERTEX_TOL = 1e-9
BRUTE_FORCE_LIMIT = 200_000


def positively_spans(directions: np.ndarray, tol: float = 1e-12) -> bool:
    """True iff the origin is interior to the convex hull of ``directions``.

    Equivalent to the directions not lying in any closed hemisphere.
    """
    u = np.asarray(directions, dtype=float)
    n = u.shape[1]
    if len(u) < n + 1:
        return False
    if n == 1:
        return bool(u.min() < 0 < u.max())
    try:
        hull = ConvexHull(u)
    except QhullError:
        return False
    return bool(np.all(hull.equations[:, -1] < -tol))


def distinct_directions(u: np.ndarray, min_angle: float = 1e-10) -> bool:
    if len(u) < 2:
        return True
    return len(cKDTree(u).query_pairs(min_angle)) == 0


@dataclass(frozen=True, eq=False)
class HPolytope:
    """``{x : <x, u_i> <= h_i}`` with unit normals ``u_i``."""

    dim: int
    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        u = np.array(self.normals, dtype=float)
        h = np.array(self.offsets, dtype=float)
        if u.ndim != 2 or u.shape[1] != self.dim or h.shape != (len(u),):
            raise LengthMismatch(f"normals {u.shape} / offsets {h.shape} do not match dim {self.dim}")
        if np.abs(np.linalg.norm(u, axis=1) - 1).max() > 1e-12:
            raise GeometryError("normals must be unit vectors (use HPolytope.from_halfspaces)")
        if not np.all(np.isfinite(h)):
            raise GeometryError("offsets must be finite")
        if not distinct_directions(u):
            raise GeometryError("normals must be distinct")
        if not positively_spans(u):
            raise UnboundedBody("normals lie in a closed hemisphere")
        u.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "normals", u)
        object.__setattr__(self, "offsets", h)

    @classmethod
    def from_halfspaces(cls, a, b) -> "HPolytope":
        """Build from ``A x <= b`` with arbitrary (nonzero) row norms."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        norms = np.linalg.norm(a, axis=1)
        return cls(a.shape[1], a / norms[:, None], b / norms)

    @classmethod
    def cube(cls, dim: int, half_width: float = 1.0) -> "HPolytope":
        return cls.box([half_width] * dim)

    @classmethod
    def box(cls, half_widths) -> "HPolytope":
        w = np.asarray(half_widths, dtype=float)
        eye = np.eye(len(w))
        return cls(len(w), np.vstack([eye, -eye]), np.concatenate([w, w]))

    @classmethod
    def circumscribed(cls, grid: SphereGrid, radius: float = 1.0) -> "HPolytope":
        """Polytope whose facets touch the sphere of ``radius`` at the grid nodes."""
        return cls(grid.dim, grid.nodes.copy(), np.full(grid.size, float(radius)))

    @property
    def size(self) -> int:
        return len(self.offsets)

    @cached_property
    def complex(self) -> "VertexComplex":
        return enumerate_vertices(self)

    def translate(self, t) -> "HPolytope":
        t = np.asarray(t, dtype=float)
        return HPolytope(self.dim, self.normals, self.offsets + self.normals @ t)

    def scale(self, s: float) -> "HPolytope":
        return HPolytope(self.dim, self.normals, s * self.offsets)

    def linear_image(self, t) -> "HPolytope":
        """The body ``T P``; normals map by the inverse transpose."""
        t = np.asarray(t, dtype=float)
        w = self.normals @ np.linalg.inv(t)  # rows are T^{-t} u_i
        s = np.linalg.norm(w, axis=1)
        return HPolytope(self.dim, w / s[:, None], self.offsets / s)

    def with_offsets(self, offsets) -> "HPolytope":
        return HPolytope(self.dim, self.normals, np.asarray(offsets, dtype=float))

    def contains(self, x, tol: float = 1e-10) -> bool:
        return bool(np.all(self.normals @ np.asarray(x, float) <= self.offsets + tol))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "normals": self.normals.tolist(), "offsets": self.offsets.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HPolytope":
        return cls(int(d["dim"]), np.asarray(d["normals"], float), np.asarray(d["offsets"], float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True, eq=False)
class VertexComplex:
    """Vertices and per-normal facets of a polytope (dimension 2 or 3).

    ``areas[i]`` is the H^{n-1} measure of the facet with normal ``normals[i]``
    (0 for inactive normals) and ``facets[i]`` its vertex indices, ordered
    around the facet in dimension 3. ``edges`` rows are ``(i, j, length)``
    for adjacent active facets; in the plane the length is 1 (a point).
    """

    dim: int
    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray
    areas: np.ndarray
    facets: tuple
    edges: np.ndarray

    @property
    def active(self) -> np.ndarray:
        return self.areas > 0

    @property
    def inactive(self) -> np.ndarray:
        return np.flatnonzero(~self.active)

    def closure(self) -> np.ndarray:
        return self.areas @ self.normals

    def surface_area(self) -> float:
        return float(self.areas.sum())

    def area_jacobian(self) -> np.ndarray:
        """d(areas)/d(offsets), the Hessian of the volume in the offsets.

        Off the diagonal the entry is ``edge / sin(angle)``; on the diagonal
        ``-sum edge * cot(angle)``. Rows of inactive normals are zero.
        """
        m = len(self.offsets)
        jac = np.zeros((m, m))
        if len(self.edges) == 0:
            return jac
        i = self.edges[:, 0].astype(int)
        j = self.edges[:, 1].astype(int)
        length = self.edges[:, 2]
        c = np.einsum("ij,ij->i", self.normals[i], self.normals[j])
        s = np.sqrt(np.maximum(1 - c * c, 0.0))
        jac[i, j] = length / s
        jac[j, i] = length / s
        np.add.at(jac, (i, i), -length * c / s)
        np.add.at(jac, (j, j), -length * c / s)
        return jac

    def to_off(self) -> str:
        """Geomview OFF text; planar complexes are embedded at z = 0."""
        v = self.vertices
        if self.dim == 2:
            v = np.column_stack([v, np.zeros(len(v))])
            faces = [_planar_cycle(self)]
        else:
            faces = [list(f) for f, a in zip(self.facets, self.areas) if a > 0]
        lines = ["OFF", f"{len(v)} {len(faces)} 0"]
        lines += [" ".join(repr(float(c)) for c in p) for p in v]
        lines += [" ".join(str(k) for k in [len(f)] + list(f)) for f in faces]
        return "\n".join(lines) + "\n"


def _planar_cycle(vc: VertexComplex) -> list[int]:
    c = vc.vertices.mean(axis=0)
    ang = np.arctan2(vc.vertices[:, 1] - c[1], vc.vertices[:, 0] - c[0])
    return [int(k) for k in np.argsort(ang)]


def _merge(points: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Cluster points closer than ``tol`` (max-norm); returns centers and labels."""
    tree = cKDTree(points)
    pairs = tree.query_pairs(tol, p=np.inf, output_type="ndarray")
    k = len(points)
    graph = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(k, k))
    _, labels = connected_components(graph, directed=False)
    # first member of each cluster is its representative
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return points[first[order]], remap[labels]


def _scale_of(offsets: np.ndarray) -> float:
    return max(float(np.abs(offsets).max()), 1e-300)


def _vertices_brute(u: np.ndarray, h: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    n = u.shape[1]
    combos = np.array(list(itertools.combinations(range(len(h)), n)))
    a = u[combos]
    ok = np.abs(np.linalg.det(a)) > 1e-12
    a, b, combos = a[ok], h[combos[ok]], combos[ok]
    if len(a) == 0:
        return np.empty((0, n)), np.empty((0, n), dtype=int)
    x = np.linalg.solve(a, b[..., None])[..., 0]
    feas = np.all(x @ u.T <= h + tol, axis=1)
    return x[feas], combos[feas]


def _vertices_dual(u: np.ndarray, h: np.ndarray, center: np.ndarray):
    slack = h - u @ center
    hull = ConvexHull(u / slack[:, None])
    a, b = hull.equations[:, :-1], hull.equations[:, -1]
    extra = [(int(pt), int(f)) for pt, f, _ in hull.coplanar] if len(hull.coplanar) else []
    return center + a / (-b[:, None]), hull.simplices, extra


def vertex_complex(normals: np.ndarray, offsets: np.ndarray, method: str = "auto") -> VertexComplex:
    u = np.asarray(normals, dtype=float)
    h = np.asarray(offsets, dtype=float)
    m, n = u.shape
    if n not in (2, 3):
        raise UnsupportedDimension("vertex enumeration is implemented for n in {2, 3}")
    scale = _scale_of(h)
    tol = VERTEX_TOL * scale
    if method == "auto":
        method = "brute" if math.comb(m, n) <= BRUTE_FORCE_LIMIT else "dual"
    extra: list = []
    if method == "brute":
        cand, gens = _vertices_brute(u, h, tol)
    elif method == "dual":
        center, radius = _chebyshev(u, h)
        if radius <= 0:
            raise DegenerateBody("empty interior")
        cand, gens, extra = _vertices_dual(u, h, center)
    else:
        raise ValueError(f"unknown method {method!r}")
    if len(cand) == 0:
        raise UnboundedBody("no vertices found")
    verts, label = _merge(cand, tol)
    if len(verts) < n + 1:
        raise DegenerateBody("fewer than n+1 vertices")
    spread = verts - verts.mean(axis=0)
    if np.linalg.svd(spread, compute_uv=False)[-1] <= tol:
        raise DegenerateBody("vertices span a lower-dimensional set")

    members: list[set] = [set() for _ in range(m)]
    for lab, g in zip(label, gens):
        for i in g:
            members[i].add(int(lab))
    for pt, f in extra:
        members[pt].add(int(label[f]))
    areas = np.zeros(m)
    facets = []
    for i in range(m):
        idx = np.array(sorted(members[i]), dtype=int)
        area, ordered = _facet_area(verts[idx], u[i], idx)
        facets.append(tuple(ordered))
        areas[i] = area if area >= AREA_CUTOFF * max(scale, 1.0) ** (n - 1) else 0.0
    edges = _edges(verts, members, areas, n)
    return VertexComplex(n, u, h, verts, areas, tuple(facets), edges)


def _facet_area(pts: np.ndarray, normal: np.ndarray, idx: np.ndarray) -> tuple[float, list[int]]:
    n = len(normal)
    if n == 2:
        if len(pts) < 2:
            return 0.0, [int(k) for k in idx]
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        a, b = np.unravel_index(np.argmax(d), d.shape)
        return float(d[a, b]), [int(idx[a]), int(idx[b])]
    if len(pts) < 3:
        return 0.0, [int(k) for k in idx]
    e1 = np.cross(normal, [1.0, 0, 0] if abs(normal[0]) < 0.9 else [0, 1.0, 0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    c = pts.mean(axis=0)
    xy = np.column_stack([(pts - c) @ e1, (pts - c) @ e2])
    order = np.argsort(np.arctan2(xy[:, 1], xy[:, 0]))
    x, y = xy[order, 0], xy[order, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    return float(area), [int(k) for k in idx[order]]


def _edges(verts: np.ndarray, members: list[set], areas: np.ndarray, n: int) -> np.ndarray:
    by_vertex: dict[int, list[int]] = {}
    for i, vs in enumerate(members):
        if areas[i] > 0:
            for v in vs:
                by_vertex.setdefault(v, []).append(i)
    shared: dict[tuple[int, int], list[int]] = {}
    for v, fs in by_vertex.items():
        for i, j in itertools.combinations(sorted(fs), 2):
            shared.setdefault((i, j), []).append(v)
    rows = []
    for (i, j), vs in sorted(shared.items()):
        if n == 2:
            rows.append((i, j, 1.0))
        elif len(vs) >= 2:
            p = verts[vs]
            d = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=2).max()
            if d > 0:
                rows.append((i, j, d))
    return np.asarray(rows, dtype=float).reshape(-1, 3)


def enumerate_vertices(p: HPolytope, method: str = "auto") -> VertexComplex:
    return vertex_complex(p.normals, p.offsets, method)


def support_eval(p: HPolytope, x) -> float:
    x = np.asarray(x, dtype=float)
    if p.dim in (2, 3):
        return float((p.complex.vertices @ x).max())
    res = linprog(-x, A_ub=p.normals, b_ub=p.offsets, bounds=[(None, None)] * p.dim, method="highs")
    if res.status != 0:
        raise UnboundedBody(res.message)
    return float(-res.fun)


def support_values(p: HPolytope, directions) -> np.ndarray:
    d = np.asarray(directions, dtype=float)
    return (d @ p.complex.vertices.T).max(axis=1)


def origin_interior(p: HPolytope) -> bool:
    return bool(p.offsets.min() > 0)


def volume(p: HPolytope) -> float:
    vc = p.complex
    if origin_interior(p):
        return float(vc.areas @ p.offsets) / p.dim
    c, _ = chebyshev_center(p)
    return float(vc.areas @ (p.offsets - p.normals @ c)) / p.dim


def _chebyshev(u: np.ndarray, h: np.ndarray, lexicographic: bool = False) -> tuple[np.ndarray, float]:
    m, n = u.shape
    a = np.column_stack([u, np.ones(m)])
    free = [(None, None)] * (n + 1)
    cost = np.zeros(n + 1)
    cost[-1] = -1
    res = linprog(cost, A_ub=a, b_ub=h, bounds=free, method="highs-ds")
    if res.status == 3:
        raise UnboundedBody("Chebyshev program unbounded")
    if res.status != 0:
        raise DegenerateBody(res.message)
    x = res.x
    r = float(x[-1])
    if not lexicographic or r <= 0:
        return x[:n], r
    tol = 1e-12 * max(_scale_of(h), 1.0)
    bounds = list(free)
    bounds[-1] = (r - tol, None)
    for k in range(n):
        cost = np.zeros(n + 1)
        cost[k] = 1
        res = linprog(cost, A_ub=a, b_ub=h, bounds=bounds, method="highs-ds")
        if res.status != 0:
            break
        x = res.x
        bounds[k] = (x[k], x[k] + tol)
    return x[:n], r


def chebyshev_center(p: HPolytope) -> tuple[np.ndarray, float]:
    """Center and radius of the largest inscribed ball, lexicographically smallest center."""
    c, r = _chebyshev(p.normals, p.offsets, lexicographic=True)
    if r <= 0:
        raise DegenerateBody(f"inscribed radius {r} <= 0")
    return c, r


def polar(p: HPolytope) -> HPolytope:
    if not origin_interior(p):
        raise OriginNotInterior("polar body requires the origin in the interior")
    v = p.complex.vertices
    r = np.linalg.norm(v, axis=1)
    return HPolytope(p.dim, v / r[:, None], 1.0 / r)


@dataclass(frozen=True, eq=False)
class SupportField:
    grid: SphereGrid
    values: np.ndarray
    origin_location: str = "unknown"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise LengthMismatch("one value per grid node required")
        if self.origin_location not in ("interior", "boundary", "unknown"):
            raise ValueError(f"bad origin location {self.origin_location!r}")
        if self.origin_location != "unknown" and v.min() < -1e-12:
            raise GeometryError("a body containing the origin has nonnegative support")
        object.__setattr__(self, "values", v)

    def is_convex(self, slack: float | None = None) -> bool:
        """Whether the samples are the restriction of a support function.

        Circle: subadditivity across each node's two neighbours,
        ``2 cos(d) h_k <= h_{k-1} + h_{k+1}``. Sphere: every halfspace
        ``<x, u_j> <= h_j`` must touch the body cut out by all of them.
        """
        h = self.values
        g = self.grid
        if slack is None:
            slack = 1e-6 * g.mesh_size**2
        if g.dim == 2:
            d = 2 * math.pi / g.size
            return bool(np.all(2 * math.cos(d) * h <= np.roll(h, 1) + np.roll(h, -1) + slack))
        if g.dim == 3:
            vc = vertex_complex(g.nodes, h, method="dual")
            hk = (g.nodes @ vc.vertices.T).max(axis=1)
            return bool(np.all(h <= hk + slack))
        raise UnsupportedDimension("convexity check implemented for n in {2, 3}")


def support_field_from_polytope(p: HPolytope, grid: SphereGrid) -> SupportField:
    if grid.dim != p.dim:
        raise LengthMismatch("grid and body dimensions differ")
    vals = support_values(p, grid.nodes)
    if origin_interior(p):
        loc = "interior"
    elif p.offsets.min() >= -1e-14 * _scale_of(p.offsets):
        loc = "boundary"
    else:
        loc = "unknown"
    return SupportField(grid, vals, loc)


def ball_polytope(dim: int, level: int, radius: float = 1.0) -> HPolytope:
    """Circumscribed polytope of the ball, tangent at the level-``level`` grid nodes."""
    return HPolytope.circumscribed(build_grid(dim, level), radius)
