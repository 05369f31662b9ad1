"""Surface-area, L_p surface-area and cone-volume measures; linear change of variables."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import betainc

from .bodies import HPolytope, distinct_directions, origin_interior, volume
from .errors import (
    GeometryError,
    IntegrabilityViolation,
    LengthMismatch,
    OriginOutside,
)
from .sphere import SphereGrid, integrate, sphere_area

ZERO_OFFSET = 1e-14


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely many atoms ``(direction, mass)`` on S^{n-1}."""

    dim: int
    directions: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        u = np.array(self.directions, dtype=float).reshape(-1, self.dim)
        m = np.array(self.masses, dtype=float).ravel()
        if len(u) != len(m):
            raise LengthMismatch("one mass per direction required")
        if len(u) and np.abs(np.linalg.norm(u, axis=1) - 1).max() > 1e-12:
            raise GeometryError("atom directions must be unit vectors")
        if not np.all(np.isfinite(m)) or (len(m) and m.min() < 0):
            raise GeometryError("atom masses must be finite and nonnegative")
        if not distinct_directions(u):
            raise GeometryError("atom directions must be distinct")
        u.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "directions", u)
        object.__setattr__(self, "masses", m)

    def __len__(self) -> int:
        return len(self.masses)

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def barycenter(self) -> np.ndarray:
        return self.masses @ self.directions

    def integrate(self, phi: Callable[[np.ndarray], np.ndarray]) -> float:
        """``sum phi(u) * mass`` with ``phi`` vectorised over rows."""
        return float(np.dot(np.asarray(phi(self.directions), dtype=float), self.masses))

    def scaled(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.dim, self.directions, c * self.masses)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "atoms": [{"u": u.tolist(), "mass": float(m)} for u, m in zip(self.directions, self.masses)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteMeasure":
        dim = int(d["dim"])
        atoms = d["atoms"]
        u = np.array([a["u"] for a in atoms], dtype=float).reshape(-1, dim)
        return cls(dim, u, np.array([a["mass"] for a in atoms], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def match_atoms(a: DiscreteMeasure, b: DiscreteMeasure, tol: float = 1e-9) -> np.ndarray:
    """Index map ``k -> j`` pairing each atom of ``a`` with the atom of ``b`` at the same direction."""
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} atoms vs {len(b)}")
    dist, idx = cKDTree(b.directions).query(a.directions)
    if len(dist) and dist.max() > tol:
        raise GeometryError(f"unmatched atom at distance {dist.max():.3g}")
    return idx


@dataclass(frozen=True, eq=False)
class DensityField:
    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise LengthMismatch("one value per grid node required")
        if v.min() < 0:
            raise GeometryError("densities are nonnegative")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: SphereGrid, f) -> "DensityField":
        return cls(grid, np.asarray(f(grid.nodes), dtype=float))

    def total(self) -> float:
        return integrate(self.grid, self.values)

    def to_measure(self) -> DiscreteMeasure:
        """Atoms at the nodes with mass ``density * weight``."""
        return DiscreteMeasure(self.grid.dim, self.grid.nodes, self.values * self.grid.weights)

    def to_dict(self) -> dict:
        d = self.grid.to_dict()
        d["values"] = self.values.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DensityField":
        return cls(SphereGrid.from_dict(d), np.asarray(d["values"], dtype=float))


def cap_area(n: int, radius: float) -> float:
    """H^{n-1} of a geodesic cap of angular ``radius`` in S^{n-1}."""
    if radius >= math.pi:
        return sphere_area(n)
    if radius > math.pi / 2:
        return sphere_area(n) - cap_area(n, math.pi - radius)
    if n == 2:
        return 2 * radius
    return 0.5 * sphere_area(n) * float(betainc((n - 1) / 2, 0.5, math.sin(radius) ** 2))


def cap_averaged_density(mu: DiscreteMeasure, grid: SphereGrid, radius: float) -> DensityField:
    """Density at each node: mass of atoms within ``radius`` divided by the cap area."""
    if grid.dim != mu.dim:
        raise LengthMismatch("dimension mismatch")
    cosang = grid.nodes @ mu.directions.T
    mass = (cosang >= math.cos(radius)) @ mu.masses
    return DensityField(grid, mass / cap_area(grid.dim, radius))


@dataclass(frozen=True)
class LinearMap:
    matrix: np.ndarray
    det_abs: float

    def __init__(self, matrix):
        a = np.array(matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise LengthMismatch("square matrix required")
        d = abs(float(np.linalg.det(a)))
        if d <= 1e-14:
            raise GeometryError(f"|det| = {d:.3g} is not invertible")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "det_abs", d)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def inverse_transpose(self) -> np.ndarray:
        return np.linalg.inv(self.matrix).T


def _as_map(t) -> LinearMap:
    return t if isinstance(t, LinearMap) else LinearMap(t)


def surface_area_measure(p: HPolytope) -> DiscreteMeasure:
    vc = p.complex
    act = vc.active
    return DiscreteMeasure(p.dim, p.normals[act], vc.areas[act])


def lp_weights(offsets: np.ndarray, areas: np.ndarray, p: float) -> np.ndarray:
    """``h^{1-p} * area`` per facet, with the conventions for zero offsets."""
    h = np.asarray(offsets, dtype=float)
    a = np.asarray(areas, dtype=float)
    if p == 1:
        return a.copy()
    act = a > 0
    scale = max(float(np.abs(h).max()), 1.0)
    zero = act & (np.abs(h) <= ZERO_OFFSET * scale)
    if np.any(act & (h < -ZERO_OFFSET * scale)):
        raise OriginOutside("an active facet has negative offset; the origin is outside")
    if p > 1 and np.any(zero):
        raise IntegrabilityViolation("h^{1-p} is not integrable: zero offset on an active facet, p > 1")
    out = np.zeros_like(a)
    pos = act & ~zero
    out[pos] = h[pos] ** (1 - p) * a[pos]
    return out


def lp_measure(p_body: HPolytope, p: float) -> DiscreteMeasure:
    """L_p surface-area measure: atoms ``(u_i, h_i^{1-p} area_i)`` over active facets."""
    vc = p_body.complex
    w = lp_weights(p_body.offsets, vc.areas, p)
    act = vc.active
    return DiscreteMeasure(p_body.dim, p_body.normals[act], w[act])


def cone_volume_measure(p_body: HPolytope) -> DiscreteMeasure:
    if p_body.offsets.min() < -ZERO_OFFSET * max(float(np.abs(p_body.offsets).max()), 1.0):
        raise OriginOutside("cone-volume measure needs the origin in the body")
    return lp_measure(p_body, 0.0).scaled(1.0 / p_body.dim)


def pushforward(t, mu: DiscreteMeasure) -> DiscreteMeasure:
    """Atom at ``u`` moves to ``T u / |T u|`` carrying its mass."""
    a = _as_map(t).matrix
    w = mu.directions @ a.T
    return DiscreteMeasure(mu.dim, w / np.linalg.norm(w, axis=1, keepdims=True), mu.masses)


def curvature_function_ellipsoid(t, x) -> np.ndarray:
    """Curvature function of ``T B^n``, extended (-(n+1))-homogeneously off the sphere.

    ``f(x) = det(T)^2 |T^t x|^{-(n+1)}``; ``x`` may be a single vector or rows.
    """
    m = _as_map(t)
    x = np.asarray(x, dtype=float)
    n = m.dim
    return m.det_abs**2 * np.linalg.norm(x @ m.matrix, axis=-1) ** (-(n + 1))


def ellipsoid_power(a) -> Callable[[np.ndarray], np.ndarray]:
    """``psi(x) = |A x|^{-n}``: the n-th power of the radial function of ``A^{-1} B^n``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    return lambda x: np.linalg.norm(np.asarray(x) @ a.T, axis=-1) ** (-n)


def check_equivariance(t, psi: Callable[[np.ndarray], np.ndarray], grid: SphereGrid) -> tuple[float, float]:
    """Quadrature values of ``int psi(T x)`` and ``|det T|^{-1} int psi`` over the sphere."""
    m = _as_map(t)
    lhs = integrate(grid, psi(grid.nodes @ m.matrix.T))
    rhs = integrate(grid, psi(grid.nodes)) / m.det_abs
    return lhs, rhs


def change_of_variables_lp(t, p_body: HPolytope, p: float,
                           phi: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
    """Both sides of the GL(n) transformation law for ``int phi dS_{p,P}``.

    The left side sums over the atoms of ``P``; the right side enumerates the
    image ``T P`` afresh and sums over its atoms ``x``:
    ``|det T|^{-1} sum phi(T^t x / |T^t x|) h_{TP}(x)^{1-p} area(x) |T^t x|^p``.
    """
    m = _as_map(t)
    if not origin_interior(p_body):
        raise OriginOutside("the transformation law is stated for bodies with the origin inside")
    lhs = lp_measure(p_body, p).integrate(phi)
    image = p_body.linear_image(m.matrix)
    vc = image.complex
    act = vc.active
    x = image.normals[act]
    tx = x @ m.matrix  # rows are T^t x
    s = np.linalg.norm(tx, axis=1)
    dens = lp_weights(image.offsets, vc.areas, p)[act]
    rhs = float(np.dot(np.asarray(phi(tx / s[:, None]), dtype=float), dens * s**p)) / m.det_abs
    return lhs, rhs


def change_of_variables_sphere(t, p: float, phi: Callable[[np.ndarray], np.ndarray],
                               grid: SphereGrid) -> tuple[float, float]:
    """Quadrature of ``int phi(T^t x/|T^t x|) |T^t x|^p`` and of
    ``|det T|^{-1} int phi(x) |T^{-t} x|^{-n-p}``."""
    m = _as_map(t)
    n = m.dim
    x = grid.nodes
    tx = x @ m.matrix
    s = np.linalg.norm(tx, axis=1)
    lhs = integrate(grid, np.asarray(phi(tx / s[:, None])) * s**p)
    r = np.linalg.norm(x @ np.linalg.inv(m.matrix), axis=1)  # |T^{-t} x|
    rhs = integrate(grid, np.asarray(phi(x)) * r ** (-n - p)) / m.det_abs
    return lhs, rhs


def cap_indicator(center, radius: float) -> Callable[[np.ndarray], np.ndarray]:
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    return lambda x: (np.asarray(x) @ c >= math.cos(radius)).astype(float)


def volume_lower_bound(theta: float, n: int, p: float) -> float:
    """Volume bound forced by ``h^{1-p} f >= 1/theta`` and ``h <= theta`` for ``0 <= p < 1``.

    Rearranges ``omega/theta <= (n V)^{1-p} theta^{p(n-1)} omega^p`` with
    ``omega = H^{n-1}(S^{n-1})``.
    """
    if not 0 <= p < 1 or theta <= 1:
        raise GeometryError("need 0 <= p < 1 and theta > 1")
    om = sphere_area(n)
    q = 1 / (1 - p)
    return (om / theta) ** q * theta ** (-p * (n - 1) * q) * om ** (-p * q) / n


def holder_volume_chain(p_body: HPolytope, p: float) -> dict:
    """Discrete version of the Hoelder chain behind :func:`volume_lower_bound`.

    ``theta`` is the smallest admissible value making both hypotheses hold for
    the atoms of ``P`` in the averaged sense (total L_p mass at least
    ``omega / theta``, support at most ``theta``).
    """
    n = p_body.dim
    om = sphere_area(n)
    vc = p_body.complex
    lp_total = lp_measure(p_body, p).total
    v = volume(p_body)
    s = vc.surface_area()
    hmax = float(np.linalg.norm(vc.vertices, axis=1).max())
    theta = max(hmax, om / lp_total, 1.0 + 1e-12)
    chain = [
        om / theta,
        lp_total,
        (n * v) ** (1 - p) * s**p,
        (n * v) ** (1 - p) * theta ** (p * (n - 1)) * om**p,
    ]
    return {"theta": theta, "chain": chain, "volume": v, "bound": volume_lower_bound(theta, n, p)}
