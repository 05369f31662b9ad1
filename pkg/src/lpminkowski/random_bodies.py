"""Seeded generators for test and experiment bodies."""
from __future__ import annotations

import numpy as np

from .bodies import HPolytope, positively_spans


def rng_for(seed: int, *path: int) -> np.random.Generator:
    """Independent stream for a sub-experiment derived from one 64-bit seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, *path]))


def random_directions(rng: np.random.Generator, dim: int, count: int) -> np.ndarray:
    x = rng.normal(size=(count, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_polytope(rng: np.random.Generator, dim: int, facets: int,
                    low: float = 0.5, high: float = 1.5) -> HPolytope:
    """Random normals, offsets uniform in [low, high]; the origin is interior."""
    while True:
        u = random_directions(rng, dim, facets)
        if positively_spans(u) and np.min(1 - np.abs(u @ u.T)[np.triu_indices(facets, 1)]) > 1e-6:
            break
    return HPolytope(dim, u, rng.uniform(low, high, size=facets))


def random_symmetric_polytope(rng: np.random.Generator, dim: int, pairs: int,
                              low: float = 0.5, high: float = 1.5) -> HPolytope:
    while True:
        u = random_directions(rng, dim, pairs)
        full = np.vstack([u, -u])
        if positively_spans(full) and np.min(1 - np.abs(u @ u.T)[np.triu_indices(pairs, 1)]) > 1e-6:
            break
    h = rng.uniform(low, high, size=pairs)
    return HPolytope(dim, full, np.concatenate([h, h]))


def random_linear_map(rng: np.random.Generator, dim: int, spread: float = 0.5) -> np.ndarray:
    """Random well-conditioned matrix: rotation x diagonal in [1-spread, 1+spread] x rotation."""
    q1, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    q2, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    d = rng.uniform(1 - spread, 1 + spread, size=dim)
    return q1 @ np.diag(d) @ q2


def random_rotation(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
