"""A body whose L_p surface-area measure lives on a lower-dimensional great sphere.

Fixed frame: ``L = span(e_1..e_{m+1})``, ``u = e_{m+1}``,
``L_0 = span(e_1..e_m)``, ``L^perp = span(e_{m+2}..e_n)`` (0-based indices
``0..m-1``, ``m``, ``m+1..n-1``). Near the origin the boundary of the planar
piece ``M`` is the graph ``z -> z - |z|^q u`` over ``L_0`` and the cone is
``C = {x : |x_{L^perp}| <= <x, -u>}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import InvalidParameters, OutOfPatch, PointOutsideCone, SingularAtZero
from .measures import cap_area
from .sphere import ball_volume, sphere_area


def eta(k: int) -> float:
    """Volume of the k-dimensional unit ball (1 for k = 0)."""
    if k < 0:
        raise InvalidParameters("k must be nonnegative")
    return ball_volume(k)


@dataclass(frozen=True)
class ConstructionParams:
    n: int
    m: int
    p: float
    r: float = 0.25

    def __post_init__(self):
        n, m, p = self.n, self.m, self.p
        if not (0 <= m <= n - 2):
            raise InvalidParameters(f"need 0 <= m <= n - 2, got n={n}, m={m}")
        if not p < 1:
            raise InvalidParameters("need p < 1")
        if not n - 2 * m - p < 0:
            raise InvalidParameters(f"need n - 2m - p < 0, got {n - 2 * m - p}")
        if not 0 < self.r < 1:
            raise InvalidParameters("patch radius must lie in (0, 1)")
        if not self.q > 2:
            raise InvalidParameters(f"q = {self.q} must exceed 2")

    @property
    def q(self) -> float:
        return 2 * self.m / (2 * self.m + self.p - self.n)

    @property
    def section_dim(self) -> int:
        """Dimension ``n - m - 1`` of the cone sections ``(x + L^perp) cap C``."""
        return self.n - self.m - 1


@dataclass(frozen=True)
class ConeModel:
    """Round cone around ``-u`` with half-angle pi/4 in ``L_0^perp``, plus ``L_0``."""

    n: int
    m: int

    @property
    def axis(self) -> np.ndarray:
        u = np.zeros(self.n)
        u[self.m] = 1.0
        return u

    half_angle: float = math.pi / 4

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        depth = -x[self.m]
        return bool(np.linalg.norm(x[self.m + 1:]) <= depth + tol)

    def section_radius(self, x) -> float:
        return float(-np.asarray(x, dtype=float)[self.m])


def cone_section_volume(x, cone: ConeModel, n: int | None = None, m: int | None = None) -> float:
    """``H^{n-m-1}((x + L^perp) cap C)``: a ball of radius ``<x, -u>``."""
    n = cone.n if n is None else n
    m = cone.m if m is None else m
    if (n, m) != (cone.n, cone.m):
        raise InvalidParameters("cone frame does not match (n, m)")
    if not cone.contains(x):
        raise PointOutsideCone("x is not in the cone")
    return eta(n - m - 1) * max(cone.section_radius(x), 0.0) ** (n - m - 1)


def _radius(z) -> float:
    return float(np.linalg.norm(np.asarray(z, dtype=float)))


def _check_patch(rho: float, params: ConstructionParams):
    if rho >= params.r:
        raise OutOfPatch(f"|z| = {rho} is outside the patch radius {params.r}")


def boundary_graph(z, params: ConstructionParams) -> np.ndarray:
    """Point ``z - |z|^q u`` of the boundary of M, embedded in R^n."""
    z = np.asarray(z, dtype=float)
    rho = _radius(z)
    _check_patch(rho, params)
    x = np.zeros(params.n)
    x[: params.m] = z
    x[params.m] = -(rho**params.q)
    return x


def graph_gradient(z, params: ConstructionParams) -> np.ndarray:
    """``Dg(z) = q |z|^{q-2} z`` for ``g(z) = |z|^q``."""
    z = np.asarray(z, dtype=float)
    rho = _radius(z)
    _check_patch(rho, params)
    if rho == 0:
        return np.zeros_like(z)
    return params.q * rho ** (params.q - 2) * z


def outer_normal(z, params: ConstructionParams) -> np.ndarray:
    """``v(z) = (Dg + u) / sqrt(1 + |Dg|^2)`` in R^n."""
    dg = graph_gradient(z, params)
    v = np.zeros(params.n)
    v[: params.m] = dg
    v[params.m] = 1.0
    return v / math.sqrt(1 + float(dg @ dg))


def inverse_curvature(z, params: ConstructionParams) -> float:
    """``1/kappa = (1 + |Dg|^2)^{(m+2)/2} / (q^m (q-1) |z|^{m(q-2)})``."""
    rho = _radius(z)
    _check_patch(rho, params)
    if rho == 0:
        raise SingularAtZero("the curvature of the graph vanishes at z = o")
    q, m = params.q, params.m
    s = 1 + (q * rho ** (q - 1)) ** 2
    return s ** ((m + 2) / 2) / (q**m * (q - 1) * rho ** (m * (q - 2)))


def support_at_normal(z, params: ConstructionParams) -> float:
    """``<z - g(z) u, v(z)> = (q - 1) |z|^q / sqrt(1 + |Dg|^2)``."""
    rho = _radius(z)
    _check_patch(rho, params)
    q = params.q
    return (q - 1) * rho**q / math.sqrt(1 + (q * rho ** (q - 1)) ** 2)


def density_phi(z, params: ConstructionParams) -> float:
    """Density of ``S_{p,K}`` at ``v(z)`` against ``H^m`` on the sphere of L."""
    rho = _radius(z)
    _check_patch(rho, params)
    if rho == 0:
        raise SingularAtZero("use density_limit at z = o")
    k = params.section_dim
    return (support_at_normal(z, params) ** (1 - params.p) * eta(k) * rho ** (params.q * k)
            * inverse_curvature(z, params))


def density_limit(params: ConstructionParams) -> float:
    q = params.q
    return eta(params.section_dim) / (q**params.m * (q - 1) ** params.p)


def phi_exponent(params: ConstructionParams) -> float:
    """Net power of ``|z|`` in :func:`density_phi` as ``z -> o``; zero for valid parameters."""
    q, m, n, p = params.q, params.m, params.n, params.p
    return q * (1 - p) + q * (n - m - 1) - m * (q - 2)


def density_table(params: ConstructionParams, radii) -> list[tuple[float, float, float, float]]:
    """Rows ``(|z|, phi, limit, phi / limit)`` along the ``e_1`` ray."""
    lim = density_limit(params)
    rows = []
    for rho in radii:
        z = np.zeros(params.m)
        z[0] = rho
        phi = density_phi(z, params)
        rows.append((float(rho), phi, lim, phi / lim))
    return rows


# integration of the L_p measure over a region of the sphere of L ---------------

def _normal_angle_limit(params: ConstructionParams) -> float:
    return math.atan(params.q * params.r ** (params.q - 1))


def _cap_interval(cos_c_u: float, c0_dot: np.ndarray, radius: float):
    """Angles ``beta`` with ``cos(beta) c_u + sin(beta) c0_dot >= cos(radius)``.

    Returns (lo, hi) arrays, empty where lo > hi, intersected with beta >= 0.
    """
    big_r = np.hypot(cos_c_u, c0_dot)
    beta0 = np.arctan2(c0_dot, cos_c_u)
    ratio = np.clip(math.cos(radius) / np.maximum(big_r, 1e-300), -1.0, 1.0)
    half = np.where(big_r >= math.cos(radius), np.arccos(ratio), -1.0)
    lo = np.maximum(beta0 - half, 0.0)
    hi = beta0 + half
    hi = np.where(half < 0, -1.0, hi)
    return lo, hi


def lower_dim_measure(params: ConstructionParams, center, radius: float,
                      inner_radius: float = 0.0, nodes: int = 96) -> float:
    """``S_{p,K}`` of ``{v in S^m : cos(radius) <= <v, c> < cos(inner_radius)}``.

    Integrates ``<x, nu(x)>^{1-p} H^{n-m-1}(C cap (x + L^perp))`` against
    ``H^m`` on the graph patch, using ``dH^m = sqrt(1 + |Dg|^2) dz``. The
    region must lie inside the normal image of the patch. ``center`` is a
    unit vector of L given by its ``m + 1`` coordinates. Polar coordinates
    ``z = rho * zhat`` are used with ``rho`` reparametrised by the normal
    angle ``beta`` (``tan beta = q rho^{q-1}``); by symmetry about the plane
    of ``u`` and ``c`` the direction integral reduces to one angle.
    """
    m = params.m
    c = np.asarray(center, dtype=float)
    if c.shape != (m + 1,):
        raise InvalidParameters("center must have m + 1 coordinates")
    c = c / np.linalg.norm(c)
    if not 0 <= inner_radius < radius <= math.pi / 2:
        raise InvalidParameters("need 0 <= inner_radius < radius <= pi/2")
    c_u = float(c[m])
    c0 = c[:m]
    s_c = float(np.linalg.norm(c0))
    beta_c = math.atan2(s_c, c_u)
    if beta_c + radius > _normal_angle_limit(params):
        raise OutOfPatch("the region reaches beyond the normal image of the patch")
    # frame in L_0: chat0 towards the center, w0 orthogonal to it
    chat0 = c0 / s_c if s_c > 0 else np.eye(m)[0]
    w0 = np.eye(m)[1] if abs(chat0[1]) < 0.9 else np.eye(m)[0]
    w0 = w0 - (w0 @ chat0) * chat0
    w0 /= np.linalg.norm(w0)

    def gamma_max(rad):
        if beta_c <= rad:
            return math.pi
        return math.asin(min(math.sin(rad) / math.sin(beta_c), 1.0))

    cuts = sorted({0.0, gamma_max(radius)} | ({gamma_max(inner_radius)} if inner_radius > 0 else set()))
    cuts = [g for g in cuts if g <= gamma_max(radius)]
    xg, wg = leggauss(nodes)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        # cosine map clusters nodes at both ends, absorbing square-root edges
        theta = 0.5 * math.pi * (xg + 1)
        gam = a + 0.5 * (b - a) * (1 - np.cos(theta))
        dgam = 0.5 * (b - a) * np.sin(theta) * 0.5 * math.pi * wg
        vals = np.array([_ray_integral(params, c_u, s_c, chat0, w0, g, radius, inner_radius, nodes)
                         for g in gam])
        total += float(np.dot(vals * np.sin(gam) ** (m - 2), dgam))
    return total * sphere_area(m - 1)


def _ray_integral(params, c_u, s_c, chat0, w0, gam, radius, inner_radius, nodes) -> float:
    m, q, p, n = params.m, params.q, params.p, params.n
    zhat = math.cos(gam) * chat0 + math.sin(gam) * w0
    dot0 = s_c * math.cos(gam)
    lo, hi = _cap_interval(c_u, np.array(dot0), radius)
    lo, hi = float(lo), float(hi)
    if hi <= lo:
        return 0.0
    pieces = [(lo, hi)]
    if inner_radius > 0:
        ilo, ihi = _cap_interval(c_u, np.array(dot0), inner_radius)
        ilo, ihi = float(ilo), float(ihi)
        if ihi > ilo:
            pieces = [(lo, max(lo, ilo)), (min(hi, ihi), hi)]
    xg, wg = leggauss(nodes)
    out = 0.0
    for a, b in pieces:
        if b <= a:
            continue
        beta = a + 0.5 * (b - a) * (xg + 1)
        w = 0.5 * (b - a) * wg
        tb = np.tan(beta)
        rho = (tb / q) ** (1 / (q - 1))
        drho = rho * (1 + tb**2) / ((q - 1) * np.maximum(tb, 1e-300))
        z = rho[:, None] * zhat[None, :]
        x = np.zeros((len(rho), n))
        x[:, :m] = z
        x[:, m] = -(rho**q)
        dg = q * (rho ** (q - 2))[:, None] * z
        s = 1 + np.einsum("ij,ij->i", dg, dg)
        v = np.zeros_like(x)
        v[:, :m] = dg
        v[:, m] = 1.0
        v /= np.sqrt(s)[:, None]
        if np.any(np.linalg.norm(x[:, m + 1:], axis=1) > -x[:, m] + 1e-12):
            raise PointOutsideCone("graph point outside the cone")
        section = eta(n - m - 1) * (-x[:, m]) ** (n - m - 1)
        vals = np.einsum("ij,ij->i", x, v) ** (1 - p) * section * np.sqrt(s) * rho ** (m - 1) * drho
        out += float(np.dot(vals, w))
    return out


def cap_measure_ratio(params: ConstructionParams, center, radius: float, nodes: int = 96) -> float:
    """``S_{p,K}(cap) / H^m(cap)``."""
    return lower_dim_measure(params, center, radius, nodes=nodes) / cap_area(params.m + 1, radius)


def normal_to_z(v, params: ConstructionParams) -> np.ndarray:
    """Inverse of ``z -> v(z)`` for a unit vector of L (``m + 1`` coordinates)."""
    v = np.asarray(v, dtype=float)
    v0, vu = v[: params.m], v[params.m]
    if vu <= 0:
        raise OutOfPatch("normal is not in the open upper hemisphere")
    s0 = float(np.linalg.norm(v0))
    if s0 == 0:
        return np.zeros(params.m)
    rho = (s0 / vu / params.q) ** (1 / (params.q - 1))
    _check_patch(rho, params)
    return rho * v0 / s0
