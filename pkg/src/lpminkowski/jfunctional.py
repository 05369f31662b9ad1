"""The translation-minimised functional J_{p,mu} for negative p and its probes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .bodies import HPolytope, chebyshev_center, origin_interior, support_values, volume
from .errors import BoundaryBlowup, GeometryError, InvalidParameters, OriginNotInterior
from .measures import DiscreteMeasure, lp_measure

GRAD_TOL = 1e-10


@dataclass(frozen=True)
class JFunctionalEval:
    p: float
    inner_minimizer: np.ndarray
    value: float
    gradient_norm: float
    iterations: int
    constrained: bool = False


def translated_power_sum(p: float, u: np.ndarray, mu: np.ndarray, h: np.ndarray, x: np.ndarray):
    """``F(x) = (1/n) sum mu_i (h_i - <x,u_i>)^p`` with gradient and Hessian in ``x``."""
    n = u.shape[1]
    s = h - u @ x
    if s.min() <= 0:
        return np.inf, None, None
    w = mu * s ** (p - 1)
    f = float(np.dot(w, s)) / n
    g = -(p / n) * (u.T @ w)
    hess = (p * (p - 1) / n) * (u.T * (mu * s ** (p - 2))) @ u
    return f, g, hess


def minimize_translation(p: float, u: np.ndarray, mu: np.ndarray, h: np.ndarray,
                         start: np.ndarray, tol: float = GRAD_TOL, max_iter: int = 200):
    """Damped Newton for ``min_x F(x)`` over ``{x : <x,u_i> < h_i}``.

    ``F`` is strictly convex for ``p < 0``; steps are halved until ``F``
    decreases and the iterate stays in the domain.
    """
    x = np.array(start, dtype=float)
    f, g, hess = translated_power_sum(p, u, mu, h, x)
    if not np.isfinite(f):
        raise BoundaryBlowup("the starting point is not interior")
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) <= tol:
            break
        d = -np.linalg.solve(hess, g)
        t = 1.0
        while t > 1e-14:
            x_new = x + t * d
            f_new, g_new, h_new = translated_power_sum(p, u, mu, h, x_new)
            if f_new <= f:
                break
            t *= 0.5
        else:
            # no decrease at machine precision: accept if the gradient is tiny in relative terms
            if np.linalg.norm(g) <= 1e-7 * max(abs(f), 1.0):
                break
            raise BoundaryBlowup("line search failed; the minimizing sequence leaves the domain")
        if np.allclose(x_new, x, rtol=0, atol=1e-16):
            x, f, g, hess = x_new, f_new, g_new, h_new
            break
        x, f, g, hess = x_new, f_new, g_new, h_new
    return x, f, float(np.linalg.norm(g)), it


def eval_J(p: float, mu: DiscreteMeasure, m_body: HPolytope) -> JFunctionalEval:
    """``J_{p,mu}(M) = inf_{x in M} (1/n) sum mu_i h_{M-x}(u_i)^p`` for ``p < 0``."""
    if p >= 0:
        raise InvalidParameters("the J functional is defined here for p < 0")
    if mu.dim != m_body.dim:
        raise GeometryError("dimension mismatch")
    u, w = mu.directions, mu.masses
    h = support_values(m_body, u)
    start, _ = chebyshev_center(m_body)
    x, f, gnorm, it = minimize_translation(p, u, w, h, start)
    if m_body.contains(x, tol=1e-10):
        return JFunctionalEval(p, x, f, gnorm, it)
    # the free minimizer lies outside M: minimise over M itself
    n = mu.dim

    def fun(y):
        val, grad, _ = translated_power_sum(p, u, w, h, y)
        return (val, grad) if np.isfinite(val) else (1e300, np.zeros(n))

    cons = {"type": "ineq", "fun": lambda y: m_body.offsets - m_body.normals @ y,
            "jac": lambda y: -m_body.normals}
    res = minimize(fun, start, jac=True, constraints=[cons], method="SLSQP",
                   options={"ftol": 1e-15, "maxiter": 500})
    x = res.x
    f, g, _ = translated_power_sum(p, u, w, h, x)
    if not np.isfinite(f):
        raise BoundaryBlowup("constrained minimizer reached the boundary")
    return JFunctionalEval(p, x, f, float(np.linalg.norm(g)), int(res.nit), constrained=True)


def j_pair(p: float, k_body: HPolytope, l_body: HPolytope) -> JFunctionalEval:
    """``J_p(K, L) = J_{p, S_{p,K}}(L)``."""
    return eval_J(p, lp_measure(k_body, p), l_body)


def parallel_facet_direction(p_body: HPolytope) -> np.ndarray | None:
    c = p_body.normals @ p_body.normals.T
    i, j = np.unravel_index(np.argmin(c), c.shape)
    if c[i, j] <= -1 + 1e-12:
        return p_body.normals[i].copy()
    return None


def squeeze_map(direction: np.ndarray, t: float, mode: str = "compress") -> np.ndarray:
    """Linear map scaling the ``direction`` component by ``1/t`` (compress) or ``t`` (stretch)."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    if mode == "compress":
        c = 1.0 / t
    elif mode == "stretch":
        c = t
    else:
        raise InvalidParameters(f"unknown mode {mode!r}")
    return np.eye(len(u)) + (c - 1.0) * np.outer(u, u)


def nonuniqueness_probe(p_body: HPolytope, p: float, factors, mode: str = "compress") -> list[dict]:
    """Table of ``J_p(P, L_t) V(L_t)^{-p/n}`` for ``L_t`` = P deformed along a parallel-facet normal.

    With ``mode="compress"`` the width across the parallel pair shrinks by the
    factor ``t``; ``"stretch"`` widens it. When P has no parallel pair the
    first facet normal is used and nothing is claimed about growth.
    """
    n = p_body.dim
    if not -n < p < 0:
        raise InvalidParameters("p must lie in (-n, 0)")
    if not origin_interior(p_body):
        raise OriginNotInterior("P must contain the origin in its interior")
    u = parallel_facet_direction(p_body)
    if u is None:
        u = p_body.normals[0]
    mu = lp_measure(p_body, p)
    rows = []
    for t in factors:
        lt = p_body.linear_image(squeeze_map(u, float(t), mode))
        ev = eval_J(p, mu, lt)
        v = volume(lt)
        rows.append({"t": float(t), "value": ev.value * v ** (-p / n), "J": ev.value,
                     "volume": v, "minimizer": ev.inner_minimizer})
    return rows


def holder_interpolation_check(k_body: HPolytope, l_body: HPolytope, p: float, q: float) -> tuple[float, float]:
    """Both sides of ``J_p(K,L') <= J_q(K,L')^{p/q} V(K)^{(q-p)/q}``.

    ``L'`` is ``L`` translated by the minimiser of ``J_q(K, L)``. The left side
    re-solves its own infimum; the right side is the direct sum over the atoms
    of ``S_{q,K}`` evaluated at the translated body.
    """
    n = k_body.dim
    if not -n < q < p < 0:
        raise InvalidParameters("need -n < q < p < 0")
    if not (origin_interior(k_body) and origin_interior(l_body)):
        raise OriginNotInterior("both bodies need the origin in the interior")
    xq = j_pair(q, k_body, l_body).inner_minimizer
    lprime = l_body.translate(-xq)
    lhs = j_pair(p, k_body, lprime).value
    mu_q = lp_measure(k_body, q)
    hq = support_values(lprime, mu_q.directions)
    direct = float(np.dot(mu_q.masses, hq**q)) / n
    rhs = direct ** (p / q) * volume(k_body) ** ((q - p) / q)
    return lhs, rhs
