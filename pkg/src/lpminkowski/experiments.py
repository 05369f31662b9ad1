"""Reproducible experiments. Each returns CSV tables and a verdict listing checked properties."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection

from .bodies import HPolytope, polar, support_values, volume
from .constructions import (
    ConstructionParams,
    cap_measure_ratio,
    density_limit,
    density_phi,
    density_table,
    normal_to_z,
)
from .errors import UnknownExperiment
from .jfunctional import eval_J, j_pair, nonuniqueness_probe
from .measures import (
    DiscreteMeasure,
    LinearMap,
    cap_indicator,
    change_of_variables_lp,
    change_of_variables_sphere,
    check_equivariance,
    ellipsoid_power,
    lp_measure,
    match_atoms,
    pushforward,
    surface_area_measure,
)
from .random_bodies import (
    random_linear_map,
    random_polytope,
    random_symmetric_polytope,
    rng_for,
)
from .solver import (
    MinkowskiProblem,
    SolverConfig,
    centered_objective,
    linearized_operator,
    lp_objective,
    lp_objective_gradient,
    negative_p_objective,
    solve_minkowski,
    volume_and_gradient,
)
from .sphere import build_grid, harmonic_multiplicity, laplace_eigenvalue

DEFAULT_SEED = 20240601


@dataclass
class Check:
    prop: str
    passed: bool
    margin: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"property": self.prop, "passed": bool(self.passed),
                "margin": float(self.margin), "detail": self.detail}


@dataclass
class Table:
    header: list
    rows: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    name: str
    tables: dict
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def verdict(self) -> dict:
        return {"experiment": self.name, "passed": self.passed,
                "checks": [c.to_dict() for c in self.checks]}


def _check_le(prop: str, value: float, bound: float, detail: str = "") -> Check:
    """Pass when ``value <= bound``; the margin is ``bound - value`` (negative on failure)."""
    return Check(prop, bool(value <= bound), bound - value, detail or f"measured {value:.6g}, bound {bound:.6g}")


# oracles ------------------------------------------------------------------------

def hull_volume(p: HPolytope) -> float:
    """Volume by qhull halfspace intersection and convex hull, independent of the facet sums."""
    hs = HalfspaceIntersection(np.column_stack([p.normals, -p.offsets]), np.zeros(p.dim)
                               if p.offsets.min() > 0 else _interior(p))
    return float(ConvexHull(hs.intersections).volume)


def _interior(p: HPolytope) -> np.ndarray:
    from .bodies import chebyshev_center
    return chebyshev_center(p)[0]


def _random_body(rng, n: int) -> HPolytope:
    facets = int(rng.integers(6, 13)) if n == 2 else int(rng.integers(10, 21))
    return random_polytope(rng, n, facets)


# identities ---------------------------------------------------------------------

def run_identities(seed: int = DEFAULT_SEED, count: int = 100, mahler_count: int = 200) -> ExperimentResult:
    rows = []
    worst_cone, worst_bary = 0.0, 0.0
    for k in range(count):
        rng = rng_for(seed, 1, k)
        n = 2 + k % 2
        body = _random_body(rng, n)
        s0 = lp_measure(body, 0.0).total
        v = hull_volume(body)
        err = abs(s0 - n * v) / (n * v)
        bary = float(np.linalg.norm(surface_area_measure(body).barycenter()))
        worst_cone = max(worst_cone, err)
        worst_bary = max(worst_bary, bary)
        rows.append([k, n, body.size, repr(s0), repr(n * v), repr(err), repr(bary)])
    checks = [
        _check_le("|S_0,K| = n V(K) within 1e-10 (relative) for random polytopes", worst_cone, 1e-10),
        _check_le("barycenter of S_K has norm <= 1e-9 for random polytopes", worst_bary, 1e-9),
    ]
    mahler_rows, mahler = mahler_check(seed, mahler_count)
    checks.append(mahler)
    return ExperimentResult("identities", {
        "identities": Table(["index", "n", "facets", "cone_volume_total", "n_times_volume",
                             "relative_error", "barycenter_norm"], rows),
        "mahler": Table(["index", "vertices", "volume", "polar_volume", "product", "bound"], mahler_rows),
    }, checks + change_of_variables_checks(seed))


def mahler_check(seed: int, count: int):
    tau = 4.0**-2 * math.pi**2
    rows = []
    worst = math.inf
    violations = 0
    for k in range(count):
        rng = rng_for(seed, 2, k)
        pts = rng.normal(size=(int(rng.integers(3, 12)), 2))
        hull = ConvexHull(pts)
        verts = pts[hull.vertices]
        # move the centroid of the polygon to the origin
        x, y = verts[:, 0], verts[:, 1]
        cross = x * np.roll(y, -1) - np.roll(x, -1) * y
        area = 0.5 * cross.sum()
        cx = ((x + np.roll(x, -1)) * cross).sum() / (6 * area)
        cy = ((y + np.roll(y, -1)) * cross).sum() / (6 * area)
        eq = ConvexHull(verts - [cx, cy]).equations
        body = HPolytope.from_halfspaces(eq[:, :2], -eq[:, 2])
        vol = volume(body)
        pvol = volume(polar(body))
        prod = vol * pvol
        worst = min(worst, prod / tau)
        violations += prod < tau
        rows.append([k, len(verts), repr(vol), repr(pvol), repr(prod), repr(tau)])
    check = Check("V(P) V(P*) >= pi^2/16 for random centred polygons", violations == 0,
                  worst - 1.0, f"{violations} violations; smallest product/bound {worst:.6g}")
    return rows, check


def change_of_variables_checks(seed: int = DEFAULT_SEED, trials: int = 10) -> list[Check]:
    """Discrete transformation laws (two enumeration paths) and quadrature identities."""
    worst_disc, worst_push = 0.0, 0.0
    for k in range(trials):
        rng = rng_for(seed, 3, k)
        n = 2 + k % 2
        body = _random_body(rng, n)
        t = random_linear_map(rng, n)
        tests: list[Callable] = [
            lambda x: np.ones(len(x)),
            lambda x: 1 + x[:, 0] ** 2 + np.exp(x[:, -1]),
            cap_indicator(np.eye(n)[0], 1.0),
        ]
        for p in (0.0, 0.5, 1.0, -0.5):
            for phi in tests:
                lhs, rhs = change_of_variables_lp(t, body, p, phi)
                worst_disc = max(worst_disc, abs(lhs - rhs) / max(abs(lhs), 1e-300))
        # cone-volume law: S_0 of the image equals |det| times the push-forward by the inverse transpose
        a = lp_measure(body.linear_image(t), 0.0)
        b = pushforward(LinearMap(np.linalg.inv(t).T), lp_measure(body, 0.0)).scaled(abs(np.linalg.det(t)))
        idx = match_atoms(a, b)
        worst_push = max(worst_push, float(np.max(np.abs(a.masses - b.masses[idx]) / a.masses)))
    grid = build_grid(2, 5)
    worst_quad = 0.0
    for k in range(trials):
        rng = rng_for(seed, 4, k)
        t = random_linear_map(rng, 2)
        lhs, rhs = check_equivariance(t, ellipsoid_power(random_linear_map(rng, 2)), grid)
        worst_quad = max(worst_quad, abs(lhs - rhs) / abs(rhs))
        c = rng.normal(size=2)
        for p in (0.0, 0.5, -0.5):
            lhs, rhs = change_of_variables_sphere(t, p, lambda x: 2 + np.tanh(x @ c), grid)
            worst_quad = max(worst_quad, abs(lhs - rhs) / abs(rhs))
    return [
        _check_le("discrete change of variables: P and TP enumeration paths agree within 1e-9", worst_disc, 1e-9),
        _check_le("cone-volume law S_0,TP = |det T| (T^-t)_* S_0,P atom-by-atom within 1e-9", worst_push, 1e-9),
        _check_le("quadrature identities (equivariance, sphere change of variables) within 1e-6 at n=2 level 5",
                  worst_quad, 1e-6),
    ]


# solver round trip and gradients --------------------------------------------------

def run_roundtrip(seed: int = DEFAULT_SEED, count: int = 50, ps=(0.0, 0.3, 0.7),
                  tol: float = 1e-4, max_iter: int = 500) -> ExperimentResult:
    rows = []
    checks = []
    for p in ps:
        ok = 0
        silent = 0
        for k in range(count):
            rng = rng_for(seed, 5, int(round(p * 1000)), k)
            n = 2 if k < count // 2 else 3
            body = _random_body(rng, n)
            mu = lp_measure(body, p)
            rep = solve_minkowski(MinkowskiProblem(p, mu), None, SolverConfig(tol=tol, max_iter=max_iter))
            good = rep.converged and rep.residual <= tol
            ok += good
            if not good and "origin-to-boundary" not in rep.degeneracy_flags:
                silent += 1
            rows.append([repr(p), k, n, len(mu), rep.status, rep.iterations, repr(rep.residual),
                         ";".join(sorted(rep.degeneracy_flags))])
        need = count - max(2 * count // 50, 0)
        checks.append(Check(f"round trip p={p}: residual <= {tol:g} in at least {need}/{count} cases",
                            ok >= need, ok - need, f"{ok}/{count} converged"))
        checks.append(Check(f"round trip p={p}: every failure carries the origin-to-boundary flag",
                            silent == 0, -silent, f"{silent} unflagged failures"))
    grad_rows, grad_checks = gradient_checks(seed)
    return ExperimentResult("roundtrip", {
        "roundtrip": Table(["p", "index", "n", "atoms", "status", "iterations", "residual", "flags"], rows),
        "gradients": Table(["regime", "point", "relative_error"], grad_rows),
    }, checks + grad_checks)


def _central_difference(f, h: np.ndarray, step: float) -> np.ndarray:
    g = np.empty_like(h)
    for i in range(len(h)):
        e = np.zeros_like(h)
        e[i] = step
        g[i] = (f(h + e) - f(h - e)) / (2 * step)
    return g


def gradient_checks(seed: int = DEFAULT_SEED, points: int = 20, step: float = 1e-6, rtol: float = 1e-6):
    regimes = {
        "p=1": lambda u, mu, h: (lp_objective(1.0, mu, h), lp_objective_gradient(1.0, mu, h)),
        "p=0": lambda u, mu, h: centered_objective(0.0, u, mu, h)[:2],
        "p=0.5": lambda u, mu, h: centered_objective(0.5, u, mu, h)[:2],
        "p=-1": lambda u, mu, h: negative_p_objective(-1.0, u, mu, h)[:2],
        "volume": lambda u, mu, h: volume_and_gradient(u, h)[:2],
    }
    rows = []
    checks = []
    for name, fn in regimes.items():
        worst = 0.0
        for k in range(points):
            rng = rng_for(seed, 6, k)
            n = 2 + k % 2
            body = random_polytope(rng, n, 8 if n == 2 else 12)
            u, h = body.normals, body.offsets
            mu = rng.uniform(0.5, 2.0, size=len(h))
            g = fn(u, mu, h)[1]
            fd = _central_difference(lambda x: fn(u, mu, x)[0], h, step)
            err = float(np.linalg.norm(g - fd) / np.linalg.norm(g))
            worst = max(worst, err)
            rows.append([name, k, repr(err)])
        checks.append(_check_le(f"gradient check {name}: analytic vs central differences (step {step:g})",
                                worst, rtol))
    return rows, checks


# stability near the constant density ----------------------------------------------

def run_stability(seed: int = DEFAULT_SEED, eps: float = 0.05, level: int = 3, ps=(0.0, 0.5),
                  tol: float = 1e-10) -> ExperimentResult:
    grid = build_grid(2, level)
    theta = np.arctan2(grid.nodes[:, 1], grid.nodes[:, 0])
    g = 1 + eps * np.cos(2 * theta)
    mu = DiscreteMeasure(2, grid.nodes, g * grid.weights)
    rows, checks = [], []
    for p in ps:
        rng = rng_for(seed, 7, int(round(p * 1000)))
        cfg = SolverConfig(tol=tol, max_iter=2000)
        circle = HPolytope(2, grid.nodes, np.ones(grid.size))
        perturbed = HPolytope(2, grid.nodes, 1 + 0.1 * rng.uniform(-1, 1, grid.size))
        r1 = solve_minkowski(MinkowskiProblem(p, mu), circle, cfg)
        r2 = solve_minkowski(MinkowskiProblem(p, mu), perturbed, cfg)
        h1, h2 = r1.terminal_body.offsets, r2.terminal_body.offsets
        gap = float(np.abs(h1 - h2).max())
        dev = float(np.abs(h1 - 1).max())
        # first-order prediction: u'' + (2 - p) u = eps cos(2 theta)
        linear = 1 + eps * np.cos(2 * theta) / ((2 - p) - 4)
        for k in range(grid.size):
            rows.append([repr(p), k, repr(float(theta[k])), repr(float(h1[k])), repr(float(h2[k])),
                         repr(float(linear[k]))])
        checks.append(Check(f"stability p={p}: both runs converge", r1.converged and r2.converged,
                            -max(r1.residual, r2.residual), f"residuals {r1.residual:.3g}, {r2.residual:.3g}"))
        checks.append(_check_le(f"stability p={p}: two initialisations agree within 1e-4", gap, 1e-4))
        checks.append(_check_le(f"stability p={p}: |h - 1| <= 5 eps", dev, 5 * eps))
    return ExperimentResult("stability", {
        "stability": Table(["p", "node", "theta", "h_circle_start", "h_perturbed_start", "h_linearised"], rows),
    }, checks)


# negative p ---------------------------------------------------------------------

def run_nonuniqueness(seed: int = DEFAULT_SEED, p: float = -1.0, factors=(1, 2, 4, 8, 16),
                      count: int = 20, ps_center=(-0.5, -1.0, -2.0), grid_points: int = 21) -> ExperimentResult:
    cube = HPolytope.cube(3)
    checks = []
    rows = []
    for mode in ("compress", "stretch"):
        table = nonuniqueness_probe(cube, p, factors, mode)
        vals = [r["value"] for r in table]
        for r in table:
            rows.append([mode, repr(r["t"]), repr(r["value"]), repr(r["J"]), repr(r["volume"])])
        if mode == "compress":
            inc = min(b - a for a, b in zip(vals, vals[1:]))
            checks.append(Check("cube probe: J_p(P, L_t) V(L_t)^(-p/n) strictly increasing in t",
                                inc > 0, inc, f"values {', '.join(f'{v:.6g}' for v in vals)}"))
            checks.append(Check("cube probe: last value at least twice the first", vals[-1] >= 2 * vals[0],
                                vals[-1] / vals[0] - 2, f"ratio {vals[-1] / vals[0]:.6g}"))
    jmm = j_pair(p, cube, cube).value
    checks.append(_check_le("J_p(M, M) = V(M) for the cube", abs(jmm - 8.0), 1e-8))
    center_rows, center_checks = optimal_center(seed, count, ps_center, grid_points)
    return ExperimentResult("nonuniqueness", {
        "nonuniqueness": Table(["mode", "t", "value", "J", "volume"], rows),
        "optimal_center": Table(["index", "p", "minimizer_norm", "grid_minimizer_norm", "grid_spacing"],
                                center_rows),
    }, checks + center_checks)


def optimal_center(seed: int = DEFAULT_SEED, count: int = 20, ps=(-0.5, -1.0, -2.0), grid_points: int = 21):
    rows = []
    worst = 0.0
    oracle_bad = 0
    for k in range(count):
        rng = rng_for(seed, 8, k)
        body = random_symmetric_polytope(rng, 3, int(rng.integers(4, 9)))
        verts = body.complex.vertices
        half = np.abs(verts).max(axis=0)
        axes = [np.linspace(-a, a, grid_points) for a in half]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        inside = np.all(pts @ body.normals.T < body.offsets - 1e-12, axis=1)
        spacing = float(np.max(2 * half / (grid_points - 1)))
        for p in ps:
            mu = lp_measure(body, p)
            ev = eval_J(p, mu, body)
            dist = float(np.linalg.norm(ev.inner_minimizer))
            h_atoms = support_values(body, mu.directions)
            slack = h_atoms[:, None] - mu.directions @ pts[inside].T
            vals = (mu.masses[:, None] * slack ** p).sum(axis=0) / 3
            best = pts[inside][int(np.argmin(vals))]
            grid_norm = float(np.linalg.norm(best))
            worst = max(worst, dist)
            oracle_bad += grid_norm > 1e-12
            rows.append([k, repr(p), repr(dist), repr(grid_norm), repr(spacing)])
    return rows, [
        _check_le("inner minimizer of J for symmetric bodies lies within 1e-6 of the origin", worst, 1e-6),
        Check("grid-search oracle over a 21^3 lattice selects the origin", oracle_bad == 0, -oracle_bad,
              f"{oracle_bad} disagreements"),
    ]


# construction and spectrum ------------------------------------------------------

CONSTRUCTION_MATRIX = ((4, 2, 0.5), (4, 2, 0.9), (5, 3, 0.5), (6, 3, 0.9))


def run_construction_limit(matrix=CONSTRUCTION_MATRIX, radii=(1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4),
                           caps: bool = True) -> ExperimentResult:
    rows, checks = [], []
    for n, m, p in matrix:
        params = ConstructionParams(n, m, p)
        for rho, phi, lim, ratio in density_table(params, radii):
            rows.append([n, m, repr(p), repr(rho), repr(phi), repr(lim), repr(ratio)])
        r3 = density_table(params, [1e-3])[0][3]
        r4 = density_table(params, [1e-4])[0][3]
        checks.append(_check_le(f"(n,m,p)=({n},{m},{p}): phi/limit within 1% at |z|=1e-3", abs(r3 - 1), 1e-2))
        checks.append(_check_le(f"(n,m,p)=({n},{m},{p}): phi/limit within 0.1% at |z|=1e-4", abs(r4 - 1), 1e-3))
    ref = ConstructionParams(4, 2, 0.5)
    z = np.array([1e-4, 0.0])
    closed = 2 / (64 * math.sqrt(7))
    checks.append(_check_le("(4,2,0.5): phi at |z|=1e-4 matches 2/(64 sqrt 7) within 0.1%",
                            abs(density_phi(z, ref) / closed - 1), 1e-3))
    cap_rows = []
    if caps:
        for n, m, p in matrix:
            params = ConstructionParams(n, m, p, r=0.5)
            for label, center in (("pole", np.eye(m + 1)[m]),
                                  ("offset", np.r_[0.02, np.zeros(m - 1), 1.0] / math.hypot(0.02, 1.0))):
                ratio = cap_measure_ratio(params, center, 1e-2)
                target = density_phi(normal_to_z(center, params), params) if label == "offset" \
                    else density_limit(params)
                cap_rows.append([n, m, repr(p), label, repr(ratio), repr(target)])
                checks.append(_check_le(f"(n,m,p)=({n},{m},{p}) {label} cap of radius 1e-2: "
                                        "measure/area within 2% of the density", abs(ratio / target - 1), 2e-2))
    return ExperimentResult("construction-limit", {
        "construction": Table(["n", "m", "p", "z_norm", "phi", "limit", "ratio"], rows),
        "caps": Table(["n", "m", "p", "center", "measure_over_area", "density"], cap_rows),
    }, checks)


def analytic_spectrum(n: int, p: float, kmax: int) -> list[tuple[int, float, int]]:
    return [(k, (n - p) + laplace_eigenvalue(n, k), harmonic_multiplicity(n, k)) for k in range(kmax + 1)]


def run_spectrum(ns=(2, 3), ps=(0.0, 0.5, 1.0), level: int | None = None) -> ExperimentResult:
    rows, checks = [], []
    for n in ns:
        lev = level if level is not None else (3 if n == 2 else 4)
        grid = build_grid(n, lev)
        kmax = 8 if n == 2 else 3
        lap = linearized_operator(n, 0.0, grid)  # shift applied per p below
        count = sum(m for _, _, m in analytic_spectrum(n, 0.0, kmax))
        base = lap.eigenvalues(count)
        for p in ps:
            eig = base - p
            pos = 0
            worst = 0.0
            for k, lam, mult in analytic_spectrum(n, p, kmax):
                got = eig[pos:pos + mult]
                pos += mult
                err = float(np.max(np.abs(got - lam)))
                rel = err if abs(lam) < 1e-12 else err / abs(lam)
                worst = max(worst, err if n == 2 else (err if abs(lam) < 1e-12 else rel))
                for val in got:
                    rows.append([n, lev, repr(p), k, repr(lam), repr(float(val))])
            near_zero = int(np.sum(np.abs(eig) < (1e-10 if n == 2 else 5e-2)))
            if n == 2:
                checks.append(_check_le(f"n=2 p={p}: eigenvalues equal (2-p)-k^2 within 1e-10", worst, 1e-10))
            else:
                checks.append(_check_le(f"n=3 p={p}: eigenvalues within 5% of (3-p)-(k^2+k) for k<=3 "
                                        "(absolute 5e-2 at zero)", worst, 5e-2))
            expected = n if p == 1 else 0
            checks.append(Check(f"n={n} p={p}: {expected} near-zero eigenvalues", near_zero == expected,
                                -abs(near_zero - expected), f"found {near_zero}"))
            if p < 1:
                gap = float(np.min(np.abs(eig)))
                checks.append(Check(f"n={n} p={p}: no eigenvalue in (-1e-6, 1e-6)", gap > 1e-6, gap - 1e-6,
                                    f"min |eigenvalue| {gap:.6g}"))
    return ExperimentResult("spectrum", {
        "spectrum": Table(["n", "level", "p", "k", "analytic", "computed"], rows),
    }, checks)


EXPERIMENTS = {
    "identities": run_identities,
    "roundtrip": run_roundtrip,
    "stability": run_stability,
    "nonuniqueness": run_nonuniqueness,
    "construction-limit": run_construction_limit,
    "spectrum": run_spectrum,
}


def get_experiment(name: str):
    try:
        return EXPERIMENTS[name]
    except KeyError:
        raise UnknownExperiment(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}") from None
