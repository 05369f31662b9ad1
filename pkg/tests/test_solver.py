import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpminkowski.bodies import HPolytope, SupportField, support_values
from lpminkowski.errors import HemisphereViolation, InvalidParameters, NegativeSupport, UnsupportedDimension
from lpminkowski.experiments import analytic_spectrum
from lpminkowski.measures import DensityField, DiscreteMeasure, lp_measure
from lpminkowski.random_bodies import random_polytope, rng_for
from lpminkowski.solver import (
    MinkowskiProblem,
    SolverConfig,
    linearized_operator,
    measure_residual,
    monge_ampere_residual,
    optimal_translation,
    solve_minkowski,
)
from lpminkowski.sphere import build_grid


def cube_measure() -> DiscreteMeasure:
    u = np.vstack([np.eye(3), -np.eye(3)])
    return DiscreteMeasure(3, u, np.full(6, 4.0))


def test_cube_round_trip_from_ball_like_start():
    mu = cube_measure()
    init = HPolytope(3, mu.directions, np.full(6, 1.3))
    rep = solve_minkowski(MinkowskiProblem(0.0, mu), init, SolverConfig(tol=1e-9))
    assert rep.converged
    assert np.abs(rep.terminal_body.offsets - 1).max() < 1e-5


def test_cube_measure_is_shared_by_boxes_at_p_zero():
    # every centred box of volume 8 has the same cone-volume measure as the cube
    mu = cube_measure()
    init = HPolytope(3, mu.directions, np.array([1.3, 0.8, 1.1, 0.9, 1.2, 1.0]))
    rep = solve_minkowski(MinkowskiProblem(0.0, mu), init, SolverConfig(tol=1e-9))
    assert rep.converged
    h = rep.terminal_body.offsets
    assert np.allclose(h[:3], h[3:], rtol=1e-8)
    assert np.prod(h[:3]) == pytest.approx(1, rel=1e-8)
    assert np.allclose(lp_measure(rep.terminal_body, 0.0).masses, 4, rtol=1e-8)


def test_random_twenty_facet_round_trip():
    q = random_polytope(rng_for(1, 0), 3, 20)
    mu = lp_measure(q, 0.5)
    rep = solve_minkowski(MinkowskiProblem(0.5, mu))
    assert rep.converged and rep.residual <= 1e-4
    got = lp_measure(rep.terminal_body.with_offsets(rep.terminal_body.offsets), 0.5)
    assert np.max(np.abs(got.masses - mu.masses) / mu.masses) <= 1e-4


def test_residual_is_measured_on_the_returned_body():
    q = random_polytope(rng_for(2, 0), 2, 9)
    mu = lp_measure(q, 0.3)
    rep = solve_minkowski(MinkowskiProblem(0.3, mu))
    body = rep.terminal_body
    res, c = measure_residual(0.3, 2, body.offsets, body.complex.areas, mu.masses)
    assert res <= 1e-4 and c == pytest.approx(1, abs=1e-8)


@pytest.mark.parametrize("p", [1.0, -0.5, -1.0])
def test_other_regimes_round_trip(p):
    for k in range(3):
        n = 2 + k % 2
        q = random_polytope(rng_for(3, k), n, 8 if n == 2 else 12)
        rep = solve_minkowski(MinkowskiProblem(p, lp_measure(q, p)))
        assert rep.converged, (k, rep.residual)


def test_p_one_reproduces_facet_areas():
    q = random_polytope(rng_for(4, 0), 3, 12)
    mu = lp_measure(q, 1.0)
    rep = solve_minkowski(MinkowskiProblem(1.0, mu))
    a = rep.terminal_body.complex.areas
    assert np.max(np.abs(a - mu.masses) / mu.masses) <= 1e-4


def test_hemisphere_measure_rejected():
    rng = rng_for(5, 0)
    d = rng.normal(size=(10, 3))
    d[:, 2] = np.abs(d[:, 2])
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    with pytest.raises(HemisphereViolation):
        MinkowskiProblem(0.0, DiscreteMeasure(3, d, np.ones(10)))


def test_problem_validation():
    mu = cube_measure()
    with pytest.raises(InvalidParameters):
        MinkowskiProblem(1.5, mu)
    with pytest.raises(InvalidParameters):
        MinkowskiProblem(-3.0, mu)
    tiny = DiscreteMeasure(3, mu.directions, np.r_[np.full(5, 4.0), 1e-13])
    with pytest.raises(InvalidParameters):
        MinkowskiProblem(0.0, tiny)
    skewed = DiscreteMeasure(3, mu.directions, np.r_[5.0, np.full(5, 4.0)])
    with pytest.raises(InvalidParameters):
        MinkowskiProblem(1.0, skewed)
    grid = build_grid(4, 0)
    with pytest.raises(UnsupportedDimension):
        MinkowskiProblem(0.0, DiscreteMeasure(4, grid.nodes, grid.weights))


def test_volume_projection_keeps_unit_volume():
    for p in (0.0, 0.5, -1.0):
        q = random_polytope(rng_for(6, int(10 * abs(p))), 3, 14)
        rep = solve_minkowski(MinkowskiProblem(p, lp_measure(q, p)), None, SolverConfig(tol=1e-8))
        assert np.abs(np.array(rep.volume_history) - 1).max() < 1e-10


def test_recentering_finds_an_interior_maximiser():
    q = random_polytope(rng_for(7, 0), 3, 12)
    mu = lp_measure(q, 0.5)
    u = mu.directions
    h = support_values(q, u) + u @ np.array([0.1, -0.05, 0.02])
    xi, f = optimal_translation(0.5, u, mu.masses, h)
    s = h - u @ xi
    assert s.min() > 0
    assert np.linalg.norm(u.T @ (mu.masses * s ** (0.5 - 1))) < 1e-9 * mu.total


def test_report_serialisation():
    mu = cube_measure()
    rep = solve_minkowski(MinkowskiProblem(0.0, mu))
    d = json.loads(rep.to_json())
    assert d["status"] == "converged"
    assert len(d["residualHistory"]) == len(d["objectiveHistory"]) == len(d["minOffsetHistory"])
    lines = rep.trace_csv().splitlines()
    assert lines[0] == "iteration,objective,residual,min_offset"
    assert len(lines) == len(d["residualHistory"]) + 1


def concentrated_measure() -> DiscreteMeasure:
    # most of the mass sits on the line through +-e1, which no planar body can realise at p = 0
    u = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [math.cos(4.6), math.sin(4.6)],
                  [math.cos(4.8), math.sin(4.8)]])
    return DiscreteMeasure(2, u, np.array([10.0, 10.0, 0.1, 0.1, 0.1]))


def test_collapse_is_flagged_not_silent():
    rep = solve_minkowski(MinkowskiProblem(0.0, concentrated_measure()), None, SolverConfig(max_iter=300))
    assert not rep.converged
    assert "origin-to-boundary" in rep.degeneracy_flags
    assert rep.status == "degenerate"


# the planar Monge-Ampere residual ----------------------------------------------------

def _theta(grid):
    return np.arctan2(grid.nodes[:, 1], grid.nodes[:, 0])


@pytest.mark.parametrize("p", [-1.0, 0.0, 0.5, 1.0])
def test_monge_ampere_unit_circle(p):
    grid = build_grid(2, 3)
    res = monge_ampere_residual(SupportField(grid, np.ones(grid.size)), DensityField(grid, np.ones(grid.size)), p)
    assert np.abs(res).max() < 1e-12


def test_monge_ampere_constant_radius():
    grid = build_grid(2, 3)
    r = 1.7
    g = np.full(grid.size, 2.0)
    res = monge_ampere_residual(np.full(grid.size, r), g, 0.0)
    assert np.allclose(res, r * r - g, atol=1e-12)
    assert np.abs(monge_ampere_residual(np.full(grid.size, r), np.full(grid.size, r * r), 0.0)).max() < 1e-12


def test_monge_ampere_linearisation():
    grid = build_grid(2, 4)
    theta = _theta(grid)
    eps = 1e-6
    res = monge_ampere_residual(1 + eps * np.cos(2 * theta), np.ones(grid.size), 0.0)
    assert np.abs(res - (-2 * eps * np.cos(2 * theta))).max() < 10 * eps**2


def test_monge_ampere_rejects_nonpositive_support():
    grid = build_grid(2, 1)
    h = np.ones(grid.size)
    h[0] = -0.1
    with pytest.raises(NegativeSupport):
        monge_ampere_residual(h, np.ones(grid.size), 0.5)


# linearised operator ---------------------------------------------------------------

def test_circle_spectrum():
    grid = build_grid(2, 3)
    eig = linearized_operator(2, 0.0, grid).eigenvalues(9)
    assert np.allclose(eig[:5], [2, 1, 1, -2, -2], atol=1e-10)
    assert np.min(np.abs(eig)) > 1e-6


def test_sphere_spectrum():
    grid = build_grid(3, 4)
    eig = linearized_operator(3, 0.0, grid).eigenvalues(16)
    assert eig[0] == pytest.approx(3, abs=1e-8)
    assert np.min(np.abs(eig)) == pytest.approx(1, abs=5e-2)
    pos = 0
    for k, lam, mult in analytic_spectrum(3, 0.0, 3):
        assert np.abs(eig[pos:pos + mult] / lam - 1).max() < 0.05
        pos += mult


def test_translation_kernel_at_p_one():
    grid = build_grid(2, 3)
    eig = linearized_operator(2, 1.0, grid).eigenvalues(5)
    assert np.sum(np.abs(eig) < 1e-10) == 2
    grid3 = build_grid(3, 4)
    eig3 = linearized_operator(3, 1.0, grid3).eigenvalues(9)
    assert np.sum(np.abs(eig3) < 5e-2) == 3


def test_linearised_operator_matches_fd_derivative_of_residual():
    grid = build_grid(2, 3)
    theta = _theta(grid)
    p = 0.5
    v = np.cos(3 * theta) + 0.3 * np.sin(theta)
    eps = 1e-6
    g = np.ones(grid.size)
    fd = (monge_ampere_residual(1 + eps * v, g, p) - monge_ampere_residual(1 - eps * v, g, p)) / (2 * eps)
    assert np.abs(fd - linearized_operator(2, p, grid).apply(v)).max() < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 0.99), st.integers(1, 8))
def test_circle_eigenfunctions(p, k):
    grid = build_grid(2, 3)
    theta = _theta(grid)
    v = np.sin(k * theta)
    out = linearized_operator(2, p, grid).apply(v)
    assert np.abs(out - ((2 - p) - k * k) * v).max() < 1e-9
