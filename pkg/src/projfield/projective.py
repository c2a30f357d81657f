"""Coarsening maps between dyadic levels and the renormalized massless field measures.

Coarsening from level ``i`` to ``i-1``:

* ``P0`` restricts a Dirichlet 0-cochain to the coarse vertices (fine tick ``2t``);
* ``P1`` sends a 1-cochain to the coarse cochain whose value on an edge is the
  sum over its two halves.

The renormalized 1-form lives on ``Im d0`` and is stored in a Gram-orthonormal
basis of that image (with respect to the scaled 1-form), so the restricted
scaled form is the identity matrix in those coordinates.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import cubical
from .cubical import CubicalComplex, build_complex, coboundary, interior_vertices
from .errors import ValidationError
from .gramlin import (
    GramForm,
    LinearOperator,
    SubspaceBasis,
    cholesky,
    gram_adjoint,
    spd_inverse,
)

RANK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CoarseningPair:
    fine: CubicalComplex
    coarse: CubicalComplex
    p0: LinearOperator
    p1: LinearOperator


@dataclass(frozen=True, eq=False)
class RenormalizedGram:
    level: int
    subspace: SubspaceBasis
    gram_r: GramForm
    # d0 expressed in subspace coordinates; square and invertible
    d_coords: np.ndarray

    def ambient_matrix(self) -> np.ndarray:
        """The renormalized form as a matrix on ambient 1-cochains (meaningful on Im d0)."""
        gb = self.subspace.gram.matrix @ self.subspace.vectors
        return gb @ self.gram_r.matrix @ gb.T


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Centered Gaussian given by its covariance operator relative to ``gram``."""

    gram: GramForm
    precision: LinearOperator
    covariance: LinearOperator
    label: str = ""

    @property
    def space_dim(self) -> int:
        return self.gram.dim

    def coordinate_covariance(self) -> np.ndarray:
        """Covariance matrix of the coefficient vector, ``Cov G^{-1}``."""
        c = self.gram.solve(self.covariance.matrix.T).T
        return 0.5 * (c + c.T)

    def invariant_defects(self) -> tuple[float, float]:
        """(``|precision covariance - I|_max``, relative asymmetry of ``G precision``)."""
        n = self.space_dim
        inv_err = np.abs(self.precision.matrix @ self.covariance.matrix - np.eye(n)).max()
        h = self.gram.matrix @ self.precision.matrix
        asym = np.abs(h - h.T).max() / np.abs(h).max()
        return float(inv_err), float(asym)


# -- coarsening maps ---------------------------------------------------------


def _check_consecutive(fine: CubicalComplex, coarse: CubicalComplex):
    if fine.dim != coarse.dim:
        raise ValidationError("fine and coarse complexes have different dimensions")
    if fine.level != coarse.level + 1:
        raise ValidationError(
            f"levels {fine.level}->{coarse.level} are not consecutive; compose single steps"
        )


def restriction_p0(fine: CubicalComplex, coarse: CubicalComplex) -> LinearOperator:
    """Restriction of Dirichlet 0-cochains to the coarse interior vertices."""
    _check_consecutive(fine, coarse)
    f_int = interior_vertices(fine)
    f_pos = {fine.cells[0][j][1]: col for col, j in enumerate(f_int)}
    c_int = interior_vertices(coarse)
    cols = [f_pos[tuple(2 * t for t in coarse.cells[0][j][1])] for j in c_int]
    m = sp.csr_array((np.ones(len(cols), dtype=np.int64), (np.arange(len(cols)), cols)),
                     shape=(len(c_int), len(f_int)))
    return LinearOperator(m, source=fine.space(0, True), target=coarse.space(0, True))


def edge_sum_p1(fine: CubicalComplex, coarse: CubicalComplex) -> LinearOperator:
    """Sum of a 1-cochain over the two halves of each coarse edge."""
    _check_consecutive(fine, coarse)
    rows, cols = [], []
    for row, (axes, anchor) in enumerate(coarse.cells[1]):
        (a,) = axes
        lo = [2 * t for t in anchor]
        hi = list(lo)
        hi[a] += 1
        rows += [row, row]
        cols += [fine.cell_index(1, (axes, tuple(lo))), fine.cell_index(1, (axes, tuple(hi)))]
    m = sp.csr_array((np.ones(len(rows), dtype=np.int64), (rows, cols)),
                     shape=(coarse.n_cells(1), fine.n_cells(1)))
    return LinearOperator(m, source=fine.space(1), target=coarse.space(1))


@lru_cache(maxsize=None)
def _complex(d: int, i: int) -> CubicalComplex:
    return build_complex(d, i)


@lru_cache(maxsize=None)
def _step_pair(d: int, i: int) -> CoarseningPair:
    fine, coarse = _complex(d, i), _complex(d, i - 1)
    return CoarseningPair(fine, coarse, restriction_p0(fine, coarse), edge_sum_p1(fine, coarse))


def coarsening_pair(d: int, i: int, j: int) -> CoarseningPair:
    """Composite maps ``P_ij = P_{j+1} ... P_i`` from level ``i`` down to ``j``."""
    if not 0 <= j < i:
        raise ValidationError(f"need 0 <= j < i, got i={i}, j={j}")
    # the cap is checked outside the caches so an env change always takes effect
    cubical.check_level(d, i)
    return _coarsening_pair(d, i, j)


@lru_cache(maxsize=None)
def _coarsening_pair(d: int, i: int, j: int) -> CoarseningPair:
    pair = _step_pair(d, i)
    p0, p1 = pair.p0, pair.p1
    for level in range(i - 1, j, -1):
        step = _step_pair(d, level)
        p0, p1 = step.p0 @ p0, step.p1 @ p1
    return CoarseningPair(_complex(d, i), _complex(d, j), p0, p1)


def check_cochain_map(pair: CoarseningPair) -> int:
    """Max-norm of ``P1 d_fine - d_coarse P0`` in integer arithmetic."""
    d_fine = coboundary(pair.fine, dirichlet=True)
    d_coarse = coboundary(pair.coarse, dirichlet=True)
    diff = sp.csr_array(pair.p1.matrix) @ d_fine.matrix - d_coarse.matrix @ sp.csr_array(pair.p0.matrix)
    diff = sp.csr_array(diff)
    if diff.nnz == 0:
        return 0
    return int(abs(diff).max())


# -- renormalized inner products -------------------------------------------


def orthonormal_range(a: np.ndarray, gram: GramForm, rank_tol: float = RANK_TOL) -> SubspaceBasis:
    """Gram-orthonormal basis of the column space of ``a`` via an SVD in Cholesky coordinates."""
    u = gram.chol.T @ np.asarray(a, dtype=float)
    left, s, _ = np.linalg.svd(u, full_matrices=False)
    keep = s > rank_tol * max(s.max(initial=0.0), np.finfo(float).tiny)
    q = left[:, keep]
    return SubspaceBasis(sla.solve_triangular(gram.chol.T, q, lower=False), gram)


@lru_cache(maxsize=None)
def _image_basis(d: int, i: int) -> tuple[SubspaceBasis, np.ndarray]:
    K = _complex(d, i)
    d0 = coboundary(K, dirichlet=True).dense().astype(float)
    g1 = cubical.gram(K, 1)
    basis = orthonormal_range(d0, g1)
    if basis.rank != d0.shape[1]:
        raise ValidationError(f"restricted coboundary on {K.label} is not injective")
    return basis, basis.coordinates(d0)


def _restricted_gram(d: int, i: int) -> RenormalizedGram:
    basis, dc = _image_basis(d, i)
    return RenormalizedGram(i, basis, GramForm.identity(basis.rank, name=f"r1[{i}]"), dc)


def p1_coords(d: int, i: int, j: int) -> np.ndarray:
    """``P1_ij`` restricted to ``Im d0``, in the orthonormal image coordinates."""
    cubical.check_level(d, i)
    bi, _ = _image_basis(d, i)
    bj, _ = _image_basis(d, j)
    p1 = coarsening_pair(d, i, j).p1.dense().astype(float)
    return bj.vectors.T @ bj.gram.matrix @ p1 @ bi.vectors


@lru_cache(maxsize=None)
def _renormalized(d: int, i: int, base: int) -> RenormalizedGram:
    if i == base:
        return _restricted_gram(d, i)
    prev = _renormalized(d, i - 1, base)
    basis, dc = _image_basis(d, i)
    q = p1_coords(d, i, i - 1)
    # adjoint w.r.t. the restricted scaled forms is the transpose in these coordinates
    u_basis = orthonormal_range(q.T, GramForm.identity(q.shape[1]))
    if u_basis.rank != q.shape[0]:
        raise ValidationError(
            f"edge-sum map at level {i} is not surjective onto Im d0 "
            f"(rank {u_basis.rank}, expected {q.shape[0]})"
        )
    u = u_basis.vectors
    full, _, _ = np.linalg.svd(u, full_matrices=True)
    v = full[:, u.shape[1]:]
    qu = q @ u
    pulled = qu.T @ prev.gram_r.matrix @ qu
    r = u @ pulled @ u.T + v @ v.T
    return RenormalizedGram(i, basis, GramForm(0.5 * (r + r.T), name=f"r1[{i}]"), dc)


def renormalized_gram(d: int, i: int, base: int = 1) -> list[RenormalizedGram]:
    """Renormalized 1-forms on ``Im d0`` for levels ``base..i``.

    Level 0 has no interior vertices, so its image is the zero space and the
    recursion effectively starts at level 1 with the restricted scaled form.
    """
    if base < 1:
        raise ValidationError("base level must be >= 1 (level 0 has no interior vertices)")
    if i < base:
        raise ValidationError(f"level {i} is below base level {base}")
    cubical.check_level(d, i)
    return [_renormalized(d, level, base) for level in range(base, i + 1)]


# -- Gaussian measures -------------------------------------------------------


def _spec_from_form(d: int, i: int, form: np.ndarray, dc: np.ndarray, label: str) -> GaussianSpec:
    K = _complex(d, i)
    g0 = cubical.gram(K, 0, dirichlet=True)
    h = dc.T @ form @ dc
    h = 0.5 * (h + h.T)
    prec = g0.solve(h)
    cov = spd_inverse(h, name=f"quadratic form of {label}").matrix @ g0.matrix
    space = K.space(0, True)
    return GaussianSpec(
        g0, LinearOperator(prec, space, space), LinearOperator(cov, space, space), label
    )


def renormalized_laplacian(d: int, i: int, base: int = 1) -> GaussianSpec:
    """Field measure with precision ``c -> d0* d0 c`` taken in the renormalized 1-form."""
    rg = renormalized_gram(d, i, base)[-1]
    return _spec_from_form(d, i, rg.gram_r.matrix, rg.d_coords, f"renormalized(d={d},i={i})")


def dirichlet_spec(d: int, i: int) -> GaussianSpec:
    """Same construction with the plain scaled 1-form (the ordinary lattice free field)."""
    cubical.check_level(d, i)
    _, dc = _image_basis(d, i)
    return _spec_from_form(d, i, np.eye(dc.shape[0]), dc, f"dirichlet(d={d},i={i})")


def check_projective_consistency(d: int, i: int, j: int, renormalized: bool = True) -> float:
    """Relative Frobenius residual of ``P0 Cov_i P0* - Cov_j``."""
    pair = coarsening_pair(d, i, j)
    make = renormalized_laplacian if renormalized else dirichlet_spec
    fine, coarse = make(d, i), make(d, j)
    p0 = pair.p0.dense().astype(float)
    p0_op = LinearOperator(p0, pair.p0.source, pair.p0.target)
    p0_adj = gram_adjoint(p0_op, fine.gram, coarse.gram)
    r = p0 @ fine.covariance.matrix @ p0_adj.matrix - coarse.covariance.matrix
    return float(np.linalg.norm(r) / np.linalg.norm(coarse.covariance.matrix))


def consistency_record(d: int, i: int, j: int, tolerance: float = 1e-8,
                       renormalized: bool = True) -> dict:
    residual = check_projective_consistency(d, i, j, renormalized)
    return {"d": d, "i": i, "j": j, "residual": residual, "tolerance": tolerance,
            "pass": residual <= tolerance}


def characteristic_functional(spec: GaussianSpec, h) -> float:
    h = np.asarray(h, dtype=float)
    if h.shape != (spec.space_dim,):
        raise ValidationError(f"vector of shape {h.shape} for space of dim {spec.space_dim}")
    q = h @ spec.gram.matrix @ (spec.covariance.matrix @ h)
    return float(np.exp(-0.5 * q))


def covariance_norm(spec: GaussianSpec) -> float:
    """Operator norm of the covariance in the geometry of ``spec.gram``."""
    h = spec.gram.matrix @ spec.covariance.matrix
    w = sla.eigh(0.5 * (h + h.T), spec.gram.matrix, eigvals_only=True)
    return float(np.abs(w).max())


def equicontinuity_bound_check(spec: GaussianSpec, pairs, bound: float) -> float:
    """Smallest slack ``rhs - lhs`` of the modulus-of-continuity bound over ``pairs``.

    ``lhs = |S(h1) - S(h2)|`` and ``rhs = sqrt(2 (1 - exp(-bound |h1-h2|^2 / 2)))``.
    """
    norm = covariance_norm(spec)
    if bound < norm * (1 - 1e-12):
        raise ValidationError(f"bound {bound} is below the covariance norm {norm}")
    worst = np.inf
    for h1, h2 in pairs:
        h1, h2 = np.asarray(h1, dtype=float), np.asarray(h2, dtype=float)
        lhs = abs(characteristic_functional(spec, h1) - characteristic_functional(spec, h2))
        dist2 = spec.gram.inner(h1 - h2, h1 - h2)
        rhs = np.sqrt(2.0 * -np.expm1(-bound * dist2 / 2.0))
        worst = min(worst, rhs - lhs)
    return float(worst)


# -- sampling ----------------------------------------------------------------


def sample(spec: GaussianSpec, n: int, seed: int, streams: int = 1) -> np.ndarray:
    """``n`` draws (rows) from the field measure, reproducible from ``seed``.

    Work is split over ``streams`` independent generators spawned from ``seed``;
    rows are concatenated in stream order.
    """
    if n < 1:
        raise ValidationError("sample count must be >= 1")
    if streams < 1:
        raise ValidationError("stream count must be >= 1")
    cg = spec.gram.chol
    h = spec.gram.matrix @ spec.precision.matrix
    h = 0.5 * (h + h.T)
    # precision in coordinates orthonormal for the pairing form
    tmp = sla.solve_triangular(cg, h, lower=True)
    p_orth = sla.solve_triangular(cg, tmp.T, lower=True)
    lp = cholesky(0.5 * (p_orth + p_orth.T), name=f"precision of {spec.label}")

    counts = [n // streams + (1 if s < n % streams else 0) for s in range(streams)]
    children = np.random.SeedSequence(seed).spawn(streams)
    blocks = []
    for count, child in zip(counts, children):
        if count == 0:
            continue
        z = np.random.default_rng(child).standard_normal((spec.space_dim, count))
        u = sla.solve_triangular(lp.T, z, lower=False)
        blocks.append(sla.solve_triangular(cg.T, u, lower=False).T)
    return np.vstack(blocks)


def pushforward_mc_check(fine_spec: GaussianSpec, p0: LinearOperator, coarse_spec: GaussianSpec,
                         n: int, seed: int) -> float:
    """Relative Frobenius error between the empirical covariance of ``P0``-pushed samples
    and the coarse covariance operator."""
    if n < 10_000:
        raise ValidationError("pushforward check needs n >= 10^4 samples")
    x = sample(fine_spec, n, seed) @ p0.dense().astype(float).T
    emp = (x.T @ x) / n
    emp_op = emp @ coarse_spec.gram.matrix
    target = coarse_spec.covariance.matrix
    return float(np.linalg.norm(emp_op - target) / np.linalg.norm(target))


def pushforward_tolerance(n: int) -> float:
    return max(0.05, 10.0 / np.sqrt(n))


def write_samples_csv(path, samples: np.ndarray):
    samples = np.atleast_2d(samples)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"c{k}" for k in range(samples.shape[1])])
        for row in samples:
            w.writerow([repr(float(v)) for v in row])
