"""Discrete L_p Minkowski problem S_{p,P} = mu, Monge-Ampere residual, linearised operator."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bodies import HPolytope, SupportField, positively_spans, support_values, vertex_complex
from .errors import (
    GeometryError,
    HemisphereViolation,
    InvalidParameters,
    LengthMismatch,
    NegativeSupport,
    UnsupportedDimension,
)
from .jfunctional import minimize_translation
from .measures import DensityField, DiscreteMeasure
from .sphere import SphereGrid, SphereOperator, laplacian_matrix

MIN_MASS = 1e-12


@dataclass(frozen=True, eq=False)
class MinkowskiProblem:
    p: float
    target: DiscreteMeasure
    normals_fixed: bool = True

    def __post_init__(self):
        n = self.target.dim
        if n not in (2, 3):
            raise UnsupportedDimension("the solver handles n in {2, 3}")
        if not (-n < self.p <= 1):
            raise InvalidParameters(f"p = {self.p} outside the supported range (-n, 1]")
        if not self.normals_fixed:
            raise InvalidParameters("only the fixed-normal formulation is implemented")
        if len(self.target) and self.target.masses.min() <= MIN_MASS:
            raise InvalidParameters(f"target masses must exceed {MIN_MASS:g}")
        if not positively_spans(self.target.directions):
            raise HemisphereViolation("target directions lie in a closed hemisphere")
        if self.p == 1:
            bary = np.linalg.norm(self.target.barycenter())
            if bary > 1e-9 * self.target.total:
                raise InvalidParameters(f"p = 1 needs a centred target (|barycenter| = {bary:.3g})")


@dataclass
class SolverConfig:
    tol: float = 1e-4
    max_iter: int = 500
    h_min: float = 1e-8
    newton_switch: float = math.inf
    stall_window: int = 60
    max_aspect: float = 1e4


@dataclass
class SolveReport:
    p: float
    iterations: int
    residual_history: list
    objective_history: list
    min_offset_history: list
    terminal_body: HPolytope
    degeneracy_flags: set = field(default_factory=set)
    converged: bool = False
    volume_history: list = field(default_factory=list)

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else math.inf

    @property
    def status(self) -> str:
        if self.converged:
            return "converged"
        return "degenerate" if self.degeneracy_flags else "not-converged"

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "status": self.status,
            "iterations": self.iterations,
            "residual": self.residual,
            "residualHistory": self.residual_history,
            "objectiveHistory": self.objective_history,
            "minOffsetHistory": self.min_offset_history,
            "volumeHistory": self.volume_history,
            "degeneracyFlags": sorted(self.degeneracy_flags),
            "terminalBody": self.terminal_body.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "objective", "residual", "min_offset"])
        for k, (f, r, m) in enumerate(zip(self.objective_history, self.residual_history,
                                          self.min_offset_history)):
            w.writerow([k, repr(float(f)), repr(float(r)), repr(float(m))])
        return buf.getvalue()


# objectives on the offsets vector ------------------------------------------------

def lp_objective(p: float, masses: np.ndarray, h: np.ndarray) -> float:
    """``sum mu h`` (p = 1), ``sum mu log h`` (p = 0), ``(1/p) sum mu h^p`` otherwise."""
    if p == 1:
        return float(np.dot(masses, h))
    if p == 0:
        return float(np.dot(masses, np.log(h)))
    return float(np.dot(masses, h**p)) / p


def lp_objective_gradient(p: float, masses: np.ndarray, h: np.ndarray) -> np.ndarray:
    return masses * h ** (p - 1)


def volume_and_gradient(u: np.ndarray, h: np.ndarray):
    """Volume of ``{x : <x,u_i> <= h_i}`` and its gradient (the facet areas)."""
    vc = vertex_complex(u, h)
    return float(vc.areas @ h) / u.shape[1], vc.areas.copy(), vc


def optimal_translation(p: float, u: np.ndarray, masses: np.ndarray, h: np.ndarray,
                        start: np.ndarray | None = None, tol: float = 1e-12, max_iter: int = 100):
    """Maximiser ``xi`` of ``xi -> lp_objective(p, mu, h - U xi)`` for ``0 <= p < 1``.

    The map is strictly concave with gradient blowing up at the boundary, so
    the maximiser is interior; damped Newton from ``start``.
    """
    n = u.shape[1]
    xi = np.zeros(n) if start is None else np.array(start, dtype=float)

    def parts(x):
        s = h - u @ x
        if s.min() <= 0:
            return -np.inf, None, None
        val = lp_objective(p, masses, s)
        w = masses * s ** (p - 1)
        grad = -(u.T @ w)
        hess = -(1 - p) * (u.T * (masses * s ** (p - 2))) @ u
        return val, grad, hess

    f, g, hess = parts(xi)
    if not np.isfinite(f):
        raise GeometryError("recentering needs an interior starting point")
    scale = float(masses @ np.abs(h ** (p - 1))) + 1e-300
    for _ in range(max_iter):
        if np.linalg.norm(g) <= tol * scale:
            break
        d = -np.linalg.solve(hess, g)
        if float(g @ d) <= 1e-24 * (1.0 + abs(f)):
            xi = xi + d
            f = parts(xi)[0]
            break
        t = 1.0
        while t > 1e-14:
            f_new, g_new, h_new = parts(xi + t * d)
            if f_new >= f:
                break
            t *= 0.5
        else:
            break
        xi = xi + t * d
        f, g, hess = f_new, g_new, h_new
    return xi, f


def centered_objective(p: float, u: np.ndarray, masses: np.ndarray, h: np.ndarray):
    """``max_xi lp_objective(h - U xi)`` with its gradient in ``h`` (envelope theorem)."""
    if p == 1:
        return lp_objective(p, masses, h), masses.copy(), np.zeros(u.shape[1])
    start = _interior_point(u, h)
    xi, f = optimal_translation(p, u, masses, h, start)
    return f, lp_objective_gradient(p, masses, h - u @ xi), xi


def negative_p_objective(p: float, u: np.ndarray, masses: np.ndarray, h: np.ndarray):
    """``J(h) V(h)^{-p/n}`` and its gradient in ``h``, for ``-n < p < 0``.

    ``J(h) = min_x (1/n) sum mu_i (h_i - <x,u_i>)^p``; the gradient uses the
    minimiser ``x*`` (envelope theorem) and the facet areas for ``dV``.
    """
    n = u.shape[1]
    x, j, _, _ = minimize_translation(p, u, masses, h, _interior_point(u, h), tol=1e-13)
    v, a, _ = volume_and_gradient(u, h)
    s = h - u @ x
    dj = (p / n) * masses * s ** (p - 1)
    w = j * v ** (-p / n)
    grad = v ** (-p / n) * dj - (p / n) * w / v * a
    return w, grad, x


def _interior_point(u: np.ndarray, h: np.ndarray) -> np.ndarray:
    n = u.shape[1]
    if h.min() > 0:
        return np.zeros(n)
    from .bodies import _chebyshev
    c, r = _chebyshev(u, h)
    if r <= 0:
        raise GeometryError("empty interior")
    return c


# residual -----------------------------------------------------------------------

def lp_masses(p: float, h: np.ndarray, areas: np.ndarray) -> np.ndarray:
    if p == 1:
        return areas.copy()
    out = np.zeros_like(areas)
    pos = h > 0
    out[pos] = h[pos] ** (1 - p) * areas[pos]
    return out


def measure_residual(p: float, n: int, h: np.ndarray, areas: np.ndarray, masses: np.ndarray):
    """Max relative atom error after the scaling ``h -> c h`` that matches total mass."""
    s = lp_masses(p, h, areas)
    tot = s.sum()
    if tot <= 0:
        return math.inf, 1.0
    c = (masses.sum() / tot) ** (1.0 / (n - p))
    return float(np.max(np.abs(c ** (n - p) * s - masses) / masses)), c


# the solver ---------------------------------------------------------------------

class _Stop(Exception):
    pass


def solve_minkowski(problem: MinkowskiProblem, init: HPolytope | None = None,
                    config: SolverConfig | None = None) -> SolveReport:
    """Find offsets ``h`` over the target normals with ``S_{p,P(h)} = mu``.

    Regimes: ``p = 1`` minimises ``sum mu h``; ``p = 0`` ``sum mu log h``;
    ``0 < p < 1`` ``(1/p) sum mu h^p``, each over ``V = 1`` and, for
    ``p < 1``, after moving the origin to the optimal translation. For
    ``-n < p < 0`` the scale-free ``J V^{-p/n}`` is maximised. A projected
    gradient phase brings the residual down, Newton's method on
    ``h^{1-p} a(h) = mu`` finishes.
    """
    cfg = config or SolverConfig()
    p = float(problem.p)
    u = problem.target.directions
    mu = problem.target.masses
    n = problem.target.dim
    if init is None:
        h = np.ones(len(mu))
    else:
        if init.dim != n:
            raise LengthMismatch("init dimension differs from the target")
        if init.offsets.min() <= 0:
            raise GeometryError("init must contain the origin in its interior")
        h = support_values(init, u)

    hist_r: list[float] = []
    hist_f: list[float] = []
    hist_m: list[float] = []
    hist_v: list[float] = []
    flags: set[str] = set()
    negative = p < 0

    def merit(hv):
        if negative:
            w, g, x = negative_p_objective(p, u, mu, hv)
            return -w, -g, x
        return centered_objective(p, u, mu, hv)

    def normalize(hv):
        """Translate to the optimal centre and rescale to unit volume."""
        val, grad, x = merit(hv)
        hv = hv - u @ x
        v, a, vc = volume_and_gradient(u, hv)
        if v <= 0:
            raise GeometryError("volume collapsed")
        c = v ** (-1.0 / n)
        hv = c * hv
        val, grad, _ = merit(hv)
        return hv, val, grad, a * c ** (n - 1), vc

    h_start = h.copy()
    h, f, g, a, vc = normalize(h)
    best = math.inf
    best_at = 0
    newton_block = 0
    it = 0
    for it in range(cfg.max_iter + 1):
        res, c = measure_residual(p, n, h, a, mu)
        hist_r.append(res)
        hist_f.append(f)
        hist_m.append(float(h.min()))
        hist_v.append(float(a @ h) / n)
        if res <= cfg.tol:
            break
        if res < best * (1 - 1e-3):
            best, best_at = res, it
        elif it - best_at > cfg.stall_window:
            break
        if it == cfg.max_iter:
            break
        if p < 1 and h.min() < cfg.h_min * h.max():
            flags.add("origin-to-boundary")
            h = np.maximum(h, cfg.h_min * h.max())
            break
        if _aspect(vc) > cfg.max_aspect:
            flags.add("diverging-diameter")
            break
        if res < cfg.newton_switch and newton_block == 0:
            step = _newton_step(p, n, u, mu, c * h)
            if step is not None:
                h, f, g, a, vc = normalize(step)
                continue
            newton_block = 10
        newton_block = max(newton_block - 1, 0)
        try:
            h, f, g, a, vc = _gradient_step(h, f, g, a, normalize)
        except _Stop:
            break

    res, c = measure_residual(p, n, h, a, mu)
    converged = res <= cfg.tol
    if not converged and not flags:
        # the descent stalled: follow the straight path from the start body's own
        # measure to the target, correcting with Newton at each stage
        saved = (h, f, g, a, vc, res, c)
        for hc in _continuation(p, n, u, mu, h_start, cfg):
            h, f, g, a, vc = normalize(hc)
            it += 1
            res, c = measure_residual(p, n, h, a, mu)
            hist_r.append(res)
            hist_f.append(f)
            hist_m.append(float(h.min()))
            hist_v.append(float(a @ h) / n)
        if res > saved[5]:
            # keep whichever state matched the target better; the history ends on it
            h, f, g, a, vc, res, c = saved
            hist_r.append(res)
            hist_f.append(f)
            hist_m.append(float(h.min()))
            hist_v.append(float(a @ h) / n)
        converged = res <= cfg.tol
    if not converged:
        if np.any(a <= 0):
            flags.add("facet-vanished")
    body = HPolytope(n, u, c * h)
    return SolveReport(p, it, hist_r, hist_f, hist_m, body, flags, converged, hist_v)


def _continuation(p, n, u, mu, h, cfg: SolverConfig, max_stages: int = 200):
    """Newton iterates along ``mu_tau = (1 - tau) S_p(h) + tau mu``, tau from 0 to 1."""
    a = vertex_complex(u, h).areas
    if np.any(a <= 0):
        return
    m0 = lp_masses(p, h, a)
    h = h * (mu.sum() / m0.sum()) ** (1.0 / (n - p))
    m0 = lp_masses(p, h, vertex_complex(u, h).areas)
    tau, dtau = 0.0, 0.25
    for _ in range(max_stages):
        nxt = min(1.0, tau + dtau)
        target = (1 - nxt) * m0 + nxt * mu
        path = _newton_path(p, n, u, target, h, cfg.tol * 1e-2 if nxt == 1 else 1e-3)
        if path is None:
            dtau *= 0.5
            if dtau < 1e-6:
                return
            continue
        h, tau = path[-1], nxt
        dtau *= 1.5
        if tau == 1.0:
            yield from path
            return
        yield h


def _newton_path(p, n, u, target, h, tol: float, max_steps: int = 30):
    path = []
    for _ in range(max_steps):
        a = vertex_complex(u, h).areas
        if np.max(np.abs(lp_masses(p, h, a) - target) / target) <= tol:
            return path or [h]
        step = _newton_step(p, n, u, target, h)
        if step is None:
            return None
        h = step
        path.append(h)
    return None


def _aspect(vc) -> float:
    v = vc.vertices
    diam = float(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=2).max())
    vol = float(vc.areas @ vc.offsets) / vc.dim
    return diam / max(vol, 1e-300) ** (1.0 / vc.dim)


def _gradient_step(h, f, g, a, normalize):
    """Backtracking step along the gradient projected onto the tangent space of ``V = 1``."""
    d = -(g - (g @ a) / (a @ a) * a)
    dn = float(d @ d)
    if dn == 0:
        raise _Stop
    # scale-aware first trial: move each offset by at most a fifth of its size
    t = 0.2 / max(float(np.max(np.abs(d) / h)), 1e-300)
    for _ in range(60):
        trial = h + t * d
        if trial.min() > 0:
            try:
                h2, f2, g2, a2, vc2 = normalize(trial)
            except GeometryError:
                h2 = None
            if h2 is not None and f2 <= f - 1e-4 * t * dn:
                return h2, f2, g2, a2, vc2
        t *= 0.5
    raise _Stop


def _newton_step(p, n, u, mu, h):
    """One damped Newton step on ``h^{1-p} a(h) - mu`` (rows weighted by ``1/mu``)."""
    vc = vertex_complex(u, h)
    a = vc.areas
    r = (lp_masses(p, h, a) - mu) / mu
    r0 = float(np.linalg.norm(r))
    jac = np.diag((1 - p) * h ** (-p) * a) + (h ** (1 - p))[:, None] * vc.area_jacobian()
    jac /= mu[:, None]
    step = np.linalg.lstsq(jac, -r, rcond=1e-12)[0]
    t = 1.0
    for _ in range(30):
        trial = h + t * step
        if trial.min() > 0:
            try:
                at = vertex_complex(u, trial).areas
            except GeometryError:
                at = None
            if at is not None and at.min() > 0:
                rt = float(np.linalg.norm((lp_masses(p, trial, at) - mu) / mu))
                if rt < r0 * (1 - 1e-4 * t):
                    return trial
        t *= 0.5
    return None


# PDE side -----------------------------------------------------------------------

def spectral_second_derivative(values: np.ndarray) -> np.ndarray:
    k = len(values)
    freq = np.fft.fftfreq(k, d=1.0 / k)
    return np.fft.ifft(-(freq**2) * np.fft.fft(values)).real


def monge_ampere_residual(h, g, p: float) -> np.ndarray:
    """Per-node ``h^{1-p} (h'' + h) - g`` on a uniform circle grid."""
    hv = h.values if isinstance(h, SupportField) else np.asarray(h, dtype=float)
    gv = g.values if isinstance(g, DensityField) else np.asarray(g, dtype=float)
    grid = h.grid if isinstance(h, SupportField) else (g.grid if isinstance(g, DensityField) else None)
    if grid is not None and grid.dim != 2:
        raise UnsupportedDimension("the Monge-Ampere residual is implemented on the circle")
    if hv.shape != gv.shape:
        raise LengthMismatch("h and g must share the grid")
    if p != 1 and hv.min() <= 0:
        raise NegativeSupport("h must be positive when p != 1")
    curv = spectral_second_derivative(hv) + hv
    return (hv ** (1 - p) if p != 1 else 1.0) * curv - gv


def linearized_operator(n: int, p: float, grid: SphereGrid) -> SphereOperator:
    """``u -> Laplace-Beltrami u + (n - p) u`` on the grid."""
    if n not in (2, 3) or grid.dim != n:
        raise UnsupportedDimension("the linearised operator is implemented for n in {2, 3}")
    return laplacian_matrix(grid).shifted(n - p)
