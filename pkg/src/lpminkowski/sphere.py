"""Quadrature grids on S^{n-1}, low-degree harmonics and the Laplace-Beltrami operator.

Grid families:

* n = 2: ``2**(level+4)`` equally spaced angles, equal weights (spectral).
* n = 3: subdivided icosahedron, spherical Voronoi cell areas as weights.
* 4 <= n <= 6: product grid in hyperspherical angles, Gauss-Jacobi rules
  absorbing the ``sin^k`` Jacobian factors.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh
from scipy.spatial import SphericalVoronoi
from scipy.special import roots_jacobi, sph_harm_y

from .errors import LengthMismatch, UnsupportedDimension

MAX_DIM = 6


def sphere_area(n: int) -> float:
    """H^{n-1}(S^{n-1}) = 2 pi^{n/2} / Gamma(n/2)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def ball_volume(k: int) -> float:
    """H^k(B^k); equals 1 for k = 0."""
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1)


@dataclass(frozen=True, eq=False)
class SphereGrid:
    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    level: int
    triangles: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for arr in (self.nodes, self.weights):
            arr.setflags(write=False)
        if self.triangles is not None:
            self.triangles.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.weights)

    @cached_property
    def angles(self) -> np.ndarray:
        if self.dim != 2:
            raise UnsupportedDimension("angles are only defined on the circle")
        return np.arctan2(self.nodes[:, 1], self.nodes[:, 0])

    @cached_property
    def neighbors(self) -> list[np.ndarray]:
        """Mesh neighbours of every node (circle: the two adjacent nodes)."""
        if self.dim == 2:
            k = self.size
            return [np.array([(i - 1) % k, (i + 1) % k]) for i in range(k)]
        if self.triangles is None:
            raise UnsupportedDimension("tensor grids carry no mesh")
        nb = [set() for _ in range(self.size)]
        for a, b, c in self.triangles:
            nb[a].update((b, c))
            nb[b].update((a, c))
            nb[c].update((a, b))
        return [np.array(sorted(s)) for s in nb]

    @cached_property
    def mesh_size(self) -> float:
        """Largest angular distance between mesh neighbours."""
        if self.dim == 2:
            return 2 * math.pi / self.size
        if self.triangles is None:
            return float("nan")
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        d = np.einsum("ij,ij->i", self.nodes[e[:, 0]], self.nodes[e[:, 1]])
        return float(np.arccos(np.clip(d, -1, 1)).max())

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "level": self.level,
            "nodes": self.nodes.tolist(),
            "weights": self.weights.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SphereGrid":
        dim, level = int(d["dim"]), int(d["level"])
        nodes = np.asarray(d["nodes"], dtype=float)
        weights = np.asarray(d["weights"], dtype=float)
        if nodes.shape != (len(weights), dim):
            raise LengthMismatch("nodes and weights disagree")
        tri = _icosphere(level)[1] if dim == 3 else None
        if tri is not None and len(nodes) != tri.max() + 1:
            tri = None
        return cls(dim, nodes, weights, level, tri)


def build_grid(dim: int, level: int) -> SphereGrid:
    if dim < 2:
        raise UnsupportedDimension(f"dim must be >= 2, got {dim}")
    if dim > MAX_DIM:
        raise UnsupportedDimension(f"dim {dim} exceeds the cap {MAX_DIM}")
    if level < 0:
        raise ValueError("level must be >= 0")
    if dim == 2:
        k = 2 ** (level + 4)
        th = 2 * np.pi * np.arange(k) / k
        nodes = np.column_stack([np.cos(th), np.sin(th)])
        return SphereGrid(2, nodes, np.full(k, 2 * np.pi / k), level)
    if dim == 3:
        nodes, tri = _icosphere(level)
        sv = SphericalVoronoi(nodes, radius=1.0, center=np.zeros(3))
        w = sv.calculate_areas()
        # renormalise away the last ulp-level drift of the Voronoi areas
        w *= 4 * np.pi / w.sum()
        return SphereGrid(3, nodes, w, level, tri)
    return _tensor_grid(dim, level)


def _icosphere(level: int) -> tuple[np.ndarray, np.ndarray]:
    t = (1 + math.sqrt(5)) / 2
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
         (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
         (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
         (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
         (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
         (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = np.array(f)
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.array(new)
    return np.array(verts), faces


def _tensor_grid(dim: int, level: int) -> SphereGrid:
    npol = level + 3
    naz = 2 * npol
    axes, wts = [], []
    # polar angle phi_k carries the Jacobian factor sin^{dim-1-k}
    for k in range(1, dim - 1):
        a = (dim - 1 - k - 1) / 2
        t, w = roots_jacobi(npol, a, a)
        axes.append(np.arccos(t))
        wts.append(w)
    axes.append(2 * np.pi * np.arange(naz) / naz)
    wts.append(np.full(naz, 2 * np.pi / naz))
    mesh = np.meshgrid(*axes, indexing="ij")
    wmesh = np.meshgrid(*wts, indexing="ij")
    phis = [m.ravel() for m in mesh]
    weights = np.prod([m.ravel() for m in wmesh], axis=0)
    pts = np.empty((len(weights), dim))
    s = np.ones(len(weights))
    for k, ph in enumerate(phis[:-1]):
        pts[:, k] = s * np.cos(ph)
        s = s * np.sin(ph)
    pts[:, dim - 2] = s * np.cos(phis[-1])
    pts[:, dim - 1] = s * np.sin(phis[-1])
    return SphereGrid(dim, pts, weights, level)


def integrate(grid: SphereGrid, values) -> float:
    v = np.asarray(values, dtype=float)
    if v.shape != (grid.size,):
        raise LengthMismatch(f"expected {grid.size} values, got {v.shape}")
    return float(np.dot(grid.weights, v))


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    dim: int
    max_degree: int
    degrees: np.ndarray
    evaluations: np.ndarray  # (nodes, functions)

    def gram(self, grid: SphereGrid) -> np.ndarray:
        e = self.evaluations
        return e.T @ (grid.weights[:, None] * e)


def harmonic_basis(grid: SphereGrid, max_degree: int) -> HarmonicBasis:
    """Real spherical harmonics of degree <= max_degree at the grid nodes.

    On the icosahedral grid the analytic family is symmetrically
    re-orthonormalised against the quadrature weights, which moves each
    function by the (small) quadrature error only.
    """
    cols, degs = [], []
    if grid.dim == 2:
        th = grid.angles
        cols.append(np.full(grid.size, 1 / math.sqrt(2 * math.pi)))
        degs.append(0)
        for k in range(1, max_degree + 1):
            cols += [np.cos(k * th) / math.sqrt(math.pi), np.sin(k * th) / math.sqrt(math.pi)]
            degs += [k, k]
    elif grid.dim == 3:
        x, y, z = grid.nodes.T
        theta = np.arccos(np.clip(z, -1, 1))
        phi = np.arctan2(y, x)
        for ell in range(max_degree + 1):
            for m in range(-ell, ell + 1):
                y_lm = sph_harm_y(ell, abs(m), theta, phi)
                if m == 0:
                    cols.append(y_lm.real)
                elif m > 0:
                    cols.append(math.sqrt(2) * y_lm.real)
                else:
                    cols.append(math.sqrt(2) * y_lm.imag)
                degs.append(ell)
    else:
        raise UnsupportedDimension("harmonics implemented for n in {2, 3}")
    ev = np.column_stack(cols)
    if grid.dim == 3:
        # Loewdin step: nearest family that is orthonormal for the grid weights
        g = ev.T @ (grid.weights[:, None] * ev)
        w, q = np.linalg.eigh(g)
        ev = ev @ (q @ np.diag(w**-0.5) @ q.T)
    return HarmonicBasis(grid.dim, max_degree, np.array(degs), ev)


def laplace_eigenvalue(n: int, k: int) -> float:
    """Eigenvalue of Delta_{S^{n-1}} on degree-k harmonics."""
    return -(k * k + (n - 2) * k)


def harmonic_multiplicity(n: int, k: int) -> int:
    if n == 2:
        return 1 if k == 0 else 2
    if n == 3:
        return 2 * k + 1
    return math.comb(k + n - 1, n - 1) - math.comb(k + n - 3, n - 1)


@dataclass(frozen=True, eq=False)
class SphereOperator:
    """The operator ``v -> -M^{-1} K v + shift * v``.

    ``K`` is a symmetric positive semidefinite stiffness matrix and ``M`` the
    diagonal lumped mass (the grid weights), so the operator is self-adjoint
    for the quadrature inner product. With ``shift = 0`` it is the discrete
    Laplace-Beltrami operator; constants span its kernel.
    """

    stiffness: sp.csr_matrix
    mass: np.ndarray
    shift: float = 0.0

    @property
    def size(self) -> int:
        return len(self.mass)

    def apply(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return -(self.stiffness @ v) / self.mass + self.shift * v

    __call__ = apply

    def dense(self) -> np.ndarray:
        return -self.stiffness.toarray() / self.mass[:, None] + self.shift * np.eye(self.size)

    def symmetric_form(self) -> np.ndarray:
        """M^{1/2} A M^{-1/2}: symmetric, same spectrum as the operator."""
        s = 1 / np.sqrt(self.mass)
        return -(s[:, None] * self.stiffness.toarray() * s[None, :]) + self.shift * np.eye(self.size)

    def shifted(self, c: float) -> "SphereOperator":
        return SphereOperator(self.stiffness, self.mass, self.shift + c)

    def eigenvalues(self, count: int | None = None) -> np.ndarray:
        """Eigenvalues in decreasing order (the top ``count`` if given)."""
        if count is None or count >= self.size - 1 or self.size <= 600:
            lam = eigh(self.stiffness.toarray(), np.diag(self.mass), eigvals_only=True)
            lam = np.sort(lam)
            if count is not None:
                lam = lam[:count]
        else:
            mass = sp.diags(self.mass)
            lam = eigsh(self.stiffness.tocsc(), k=count, M=mass, sigma=-1e-3,
                        which="LM", return_eigenvectors=False)
            lam = np.sort(lam)
        return self.shift - lam


def laplacian_matrix(grid: SphereGrid) -> SphereOperator:
    if grid.dim == 2:
        k = grid.size
        freq = np.fft.fftfreq(k, d=1.0 / k)
        # symmetric circulant: first column is the inverse FFT of -k^2
        col = np.fft.ifft(-(freq**2)).real
        idx = (np.arange(k)[:, None] - np.arange(k)[None, :]) % k
        d2 = col[idx]
        d2 = 0.5 * (d2 + d2.T)
        stiff = -grid.weights[:, None] * d2
        return SphereOperator(sp.csr_matrix(stiff), grid.weights.copy())
    if grid.dim == 3:
        if grid.triangles is None:
            raise UnsupportedDimension("cotangent Laplacian needs the icosahedral mesh")
        return SphereOperator(_cotan_stiffness(grid.nodes, grid.triangles), grid.weights.copy())
    raise UnsupportedDimension("Laplacian implemented for n in {2, 3}")


def _cotan_stiffness(x: np.ndarray, tri: np.ndarray) -> sp.csr_matrix:
    n = len(x)
    rows, cols, vals = [], [], []
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        i, j, k = tri[:, a], tri[:, b], tri[:, c]
        # angle at k is opposite to edge (i, j)
        e1, e2 = x[i] - x[k], x[j] - x[k]
        cot = np.einsum("ij,ij->i", e1, e2) / np.linalg.norm(np.cross(e1, e2), axis=1)
        rows += [i, j]
        cols += [j, i]
        vals += [-0.5 * cot, -0.5 * cot]
    off = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()
