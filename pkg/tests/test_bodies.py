import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from lpminkowski.bodies import (
    HPolytope,
    SupportField,
    ball_polytope,
    chebyshev_center,
    enumerate_vertices,
    polar,
    positively_spans,
    support_eval,
    support_field_from_polytope,
    support_values,
    volume,
)
from lpminkowski.errors import DegenerateBody, GeometryError, OriginNotInterior, UnboundedBody
from lpminkowski.random_bodies import random_polytope, rng_for
from lpminkowski.sphere import build_grid

TETRA = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)


def tetrahedron() -> HPolytope:
    return HPolytope(3, -TETRA / math.sqrt(3), np.full(4, 1 / math.sqrt(3)))


def _random(seed, k, n=3, facets=12):
    return random_polytope(rng_for(seed, k), n, facets)


def test_cube_support():
    cube = HPolytope.cube(3)
    assert support_eval(cube, [1, 0, 0]) == pytest.approx(1)
    assert support_eval(cube, [1, 1, 1]) == pytest.approx(3)
    assert support_eval(_random(1, 0), np.zeros(3)) == 0


def test_square_and_cube_complex():
    sq = enumerate_vertices(HPolytope.cube(2))
    assert len(sq.vertices) == 4
    assert np.allclose(sq.areas, 2)
    cube = enumerate_vertices(HPolytope.cube(3))
    assert len(cube.vertices) == 8
    assert np.allclose(cube.areas, 4)


def test_tetrahedron_against_known_vertices():
    vc = enumerate_vertices(tetrahedron())
    got = vc.vertices[np.lexsort(vc.vertices.T)]
    ref = TETRA[np.lexsort(TETRA.T)]
    assert np.allclose(got, ref, atol=1e-12)
    assert np.abs(vc.closure()).max() < 1e-9
    assert volume(tetrahedron()) == pytest.approx(ConvexHull(TETRA).volume, rel=1e-12)


def test_facets_lie_in_their_hyperplanes():
    p = _random(2, 0, facets=15)
    vc = p.complex
    for i, idx in enumerate(vc.facets):
        if len(idx):
            assert np.abs(vc.vertices[list(idx)] @ p.normals[i] - p.offsets[i]).max() < 1e-9


def test_brute_and_dual_enumeration_agree():
    p = _random(3, 0, facets=14)
    a = enumerate_vertices(p, method="brute")
    b = enumerate_vertices(p, method="dual")
    assert np.allclose(a.areas, b.areas, atol=1e-10)
    assert len(a.vertices) == len(b.vertices)


def test_redundant_facet_reported_inactive():
    u = np.vstack([np.eye(3), -np.eye(3), [[1, 1, 1] / np.sqrt(3)]])
    p = HPolytope(3, u, np.r_[np.ones(6), 10.0])
    vc = p.complex
    assert list(vc.inactive) == [6]


def test_unbounded_and_degenerate():
    with pytest.raises((UnboundedBody, GeometryError)):
        enumerate_vertices(HPolytope(2, np.array([[1.0, 0], [0, 1], [-1, 0]]), np.ones(3)))
    with pytest.raises(DegenerateBody):
        enumerate_vertices(HPolytope(2, np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]]),
                                     np.array([1.0, -1.0, 1.0, 1.0])))


def test_volumes():
    assert volume(HPolytope.cube(3)) == 8
    assert volume(HPolytope.cube(2)) == pytest.approx(4)


def test_volume_against_monte_carlo():
    p = _random(4, 0, facets=12)
    rng = np.random.default_rng(4)
    v = p.complex.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    hits, total = 0, 10_000_000
    for _ in range(10):
        x = rng.uniform(lo, hi, size=(total // 10, 3))
        hits += int(np.all(x @ p.normals.T <= p.offsets, axis=1).sum())
    mc = hits / total * np.prod(hi - lo)
    assert volume(p) == pytest.approx(mc, rel=1e-2)


def test_volume_with_origin_outside():
    p = HPolytope.cube(3).translate([3.0, 0, 0])
    assert p.offsets.min() < 0
    assert volume(p) == pytest.approx(8)


def test_volume_identity_from_complex():
    for k in range(5):
        p = _random(5, k)
        vc = p.complex
        assert volume(p) == pytest.approx(float(vc.areas @ p.offsets) / 3, rel=1e-10)


def test_closure_on_random_bodies():
    for k in range(100):
        n = 2 + k % 2
        p = _random(6, k, n, 8 if n == 2 else 14)
        assert np.abs(p.complex.closure()).max() < 1e-9


def test_polar_of_square():
    pst = polar(HPolytope.cube(2))
    v = pst.complex.vertices
    ref = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)
    assert all(np.min(np.linalg.norm(v - r, axis=1)) < 1e-12 for r in ref)
    assert volume(HPolytope.cube(2)) * volume(pst) == pytest.approx(8)
    assert 8 >= math.pi**2 / 16


def test_bipolar_identity():
    p = _random(7, 0, facets=12)
    back = polar(polar(p))
    grid = build_grid(3, 2)
    assert np.abs(support_values(back, grid.nodes) - support_values(p, grid.nodes)).max() < 1e-8


def test_polar_requires_interior_origin():
    with pytest.raises(OriginNotInterior):
        polar(HPolytope.cube(2).translate([1.0, 0]))


def test_chebyshev_center():
    c, r = chebyshev_center(HPolytope.cube(3))
    assert np.allclose(c, 0, atol=1e-10) and r == pytest.approx(1)
    c, r = chebyshev_center(HPolytope.cube(3).translate([0.5, 0, 0]))
    assert np.allclose(c, [0.5, 0, 0], atol=1e-10) and r == pytest.approx(1)
    p = _random(8, 0)
    c, r = chebyshev_center(p)
    assert np.all(p.normals @ c + r <= p.offsets + 1e-10)


def test_support_field_cube_and_lipschitz():
    grid = build_grid(3, 2)
    f = support_field_from_polytope(HPolytope.cube(3), grid)
    i = int(np.argmax(grid.nodes[:, 0]))
    if np.allclose(grid.nodes[i], [1, 0, 0]):
        assert f.values[i] == pytest.approx(1)
    assert support_eval(HPolytope.cube(3), [1, 0, 0]) == pytest.approx(1)
    assert f.origin_location == "interior"
    p = _random(9, 0)
    fp = support_field_from_polytope(p, grid)
    radius = np.linalg.norm(p.complex.vertices, axis=1).max()
    d = np.linalg.norm(grid.nodes[:, None] - grid.nodes[None], axis=2)
    assert np.all(np.abs(fp.values[:, None] - fp.values[None]) <= radius * d + 1e-12)


def test_ball_field_close_to_one():
    grid = build_grid(3, 2)
    f = support_field_from_polytope(ball_polytope(3, 5), grid)
    assert np.abs(f.values - 1).max() < 2e-3


def test_support_fields_are_convex_and_violations_detected():
    for dim, level in ((2, 3), (3, 2)):
        grid = build_grid(dim, level)
        f = support_field_from_polytope(_random(10, dim, dim, 10), grid)
        assert f.is_convex()
        dented = f.values.copy()
        dented[0] *= 1.5
        assert not SupportField(grid, dented).is_convex()


def test_boundary_origin_location():
    p = HPolytope.cube(2).translate([1.0, 0])
    assert support_field_from_polytope(p, build_grid(2, 1)).origin_location == "boundary"


def test_hemisphere_directions_do_not_span():
    u = np.array([[1.0, 0], [0, 1], [np.sqrt(0.5), np.sqrt(0.5)]])
    assert not positively_spans(u)
    assert positively_spans(HPolytope.cube(3).normals)


def test_json_and_off_export():
    p = _random(11, 0)
    back = HPolytope.from_dict(json.loads(p.to_json()))
    assert np.array_equal(back.normals, p.normals) and np.array_equal(back.offsets, p.offsets)
    off = enumerate_vertices(HPolytope.cube(3)).to_off()
    assert off.startswith("OFF") and off.splitlines()[1].split()[:2] == ["8", "6"]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(-2, 2), min_size=3, max_size=3),
       st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_translation_covariance(seed, t, x):
    p = _random(seed, 1)
    t, x = np.array(t), np.array(x)
    assert support_eval(p.translate(t), x) == pytest.approx(support_eval(p, x) + t @ x, abs=1e-12 * (1 + abs(t @ x)) + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10))
def test_support_is_positively_homogeneous(seed, lam):
    p = _random(seed, 2)
    x = rng_for(seed, 3).normal(size=3)
    assert support_eval(p, lam * x) == pytest.approx(lam * support_eval(p, x), rel=1e-12)
