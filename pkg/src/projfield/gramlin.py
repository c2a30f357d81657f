"""Dense linear algebra on finite-dimensional spaces carrying an SPD Gram form.

Every adjoint in the package is a Gram-adjoint: for ``A: (X, g_src) -> (Y, g_tgt)``
the adjoint is ``g_src^{-1} A^T g_tgt``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import NotSPDError, ValidationError

SYM_RTOL = 1e-12


def _as_matrix(a, name="matrix") -> np.ndarray:
    m = np.array(a, dtype=float)
    if m.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} has non-finite entries")
    return m


def cholesky(a: np.ndarray, name: str = "operator") -> np.ndarray:
    """Lower Cholesky factor of ``a``; the only positive-definiteness test used."""
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(f"{name} is not symmetric positive definite") from exc


@dataclass(frozen=True, eq=False)
class GramForm:
    """Inner product ``<x, y> = x^T G y`` on R^dim."""

    matrix: np.ndarray
    name: str = "gram"
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = _as_matrix(self.matrix, self.name)
        if m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ValidationError(f"{self.name} must be square and non-empty, got {m.shape}")
        scale = max(np.abs(m).max(), np.finfo(float).tiny)
        if np.abs(m - m.T).max() > SYM_RTOL * scale:
            raise ValidationError(f"{self.name} is not symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "chol", cholesky(m, self.name))

    @classmethod
    def identity(cls, dim: int, scale: float = 1.0, name: str = "gram") -> "GramForm":
        return cls(scale * np.eye(dim), name=name)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def inner(self, x, y) -> float:
        return float(np.asarray(x) @ self.matrix @ np.asarray(y))

    def norm(self, x) -> float:
        return float(np.sqrt(max(self.inner(x, x), 0.0)))

    def solve(self, b) -> np.ndarray:
        """Apply ``G^{-1}`` to a vector or to the columns of a matrix."""
        return sla.cho_solve((self.chol, True), np.asarray(b, dtype=float))


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """Matrix tagged with the labels of its source and target spaces.

    Integer incidence matrices may be held sparse; everything else is dense.
    """

    matrix: np.ndarray
    source: str = "?"
    target: str = "?"

    def __post_init__(self):
        m = sp.csr_array(self.matrix) if sp.issparse(self.matrix) else np.asarray(self.matrix)
        if m.ndim != 2:
            raise ValidationError(f"operator matrix must be 2-dimensional, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if sp.issparse(self.matrix) else self.matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            if other.target != self.source:
                raise ValidationError(
                    f"cannot compose {self.source}->{self.target} after "
                    f"{other.source}->{other.target}"
                )
            return LinearOperator(self.matrix @ other.matrix, other.source, self.target)
        return self.matrix @ np.asarray(other)

    def __sub__(self, other: "LinearOperator") -> "LinearOperator":
        if (self.source, self.target) != (other.source, other.target):
            raise ValidationError("operator difference needs matching spaces")
        return LinearOperator(self.matrix - other.matrix, self.source, self.target)


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Gram-orthonormal basis, stored as the columns of ``vectors``."""

    vectors: np.ndarray
    gram: GramForm

    @property
    def ambient_dim(self) -> int:
        return self.gram.dim

    @property
    def rank(self) -> int:
        return self.vectors.shape[1]

    def coordinates(self, x) -> np.ndarray:
        """Coefficients of ``x`` (assumed in the span) in this basis."""
        return self.vectors.T @ (self.gram.matrix @ np.asarray(x, dtype=float))

    def orthonormality_defect(self) -> float:
        b = self.vectors
        if b.shape[1] == 0:
            return 0.0
        return float(np.abs(b.T @ self.gram.matrix @ b - np.eye(b.shape[1])).max())


def gram_adjoint(a: LinearOperator, g_src: GramForm, g_tgt: GramForm) -> LinearOperator:
    """Adjoint of ``a`` with respect to the given source and target forms."""
    if a.cols != g_src.dim or a.rows != g_tgt.dim:
        raise ValidationError(
            f"operator of shape {a.shape} does not map dim {g_src.dim} to dim {g_tgt.dim}"
        )
    m = g_src.solve(a.dense().T @ g_tgt.matrix)
    return LinearOperator(m, source=a.target, target=a.source)


def orthonormalize(vectors, gram: GramForm, rank_tol: float | None = None) -> SubspaceBasis:
    """Gram-Schmidt against ``gram`` with one reorthogonalization pass.

    Vectors whose residual norm drops below ``rank_tol`` are discarded. The
    default tolerance is ``1e-9`` times the largest input norm.
    """
    vecs = np.array(vectors, dtype=float)
    if vecs.size == 0:
        return SubspaceBasis(np.zeros((gram.dim, 0)), gram)
    if vecs.ndim == 1:
        vecs = vecs[None, :]
    if vecs.shape[1] != gram.dim:
        raise ValidationError(f"vectors have length {vecs.shape[1]}, gram has dim {gram.dim}")
    if not np.all(np.isfinite(vecs)):
        raise ValidationError("vectors contain NaN or infinite entries")
    g = gram.matrix
    norms = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", vecs, g, vecs), 0.0))
    if rank_tol is None:
        rank_tol = 1e-9 * max(norms.max(), np.finfo(float).tiny)
    if rank_tol <= 0:
        raise ValidationError("rank_tol must be positive")

    basis: list[np.ndarray] = []
    for v in vecs:
        w = v.copy()
        for _ in range(2):
            for q in basis:
                w -= (q @ g @ w) * q
        nrm = np.sqrt(max(w @ g @ w, 0.0))
        if nrm > rank_tol:
            basis.append(w / nrm)
    out = np.column_stack(basis) if basis else np.zeros((gram.dim, 0))
    return SubspaceBasis(out, gram)


def orthonormal_complement(basis: SubspaceBasis) -> SubspaceBasis:
    """Gram-orthonormal basis of the orthogonal complement of ``basis``."""
    g = basis.gram
    n = g.dim
    # in Cholesky coordinates the form is Euclidean, so an SVD gives the complement
    u = g.chol.T @ basis.vectors
    if u.shape[1] == 0:
        q = np.eye(n)
    else:
        full, _, _ = np.linalg.svd(u, full_matrices=True)
        q = full[:, u.shape[1]:]
    comp = sla.solve_triangular(g.chol.T, q, lower=False)
    return SubspaceBasis(comp, g)


def _symmetric_matrix(q, name) -> np.ndarray:
    m = q.dense() if isinstance(q, LinearOperator) else _as_matrix(q, name)
    m = np.asarray(m, dtype=float)
    if m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be square, got {m.shape}")
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    if np.abs(m - m.T).max() > SYM_RTOL * scale:
        raise NotSPDError(f"{name} is not symmetric")
    return m


def spd_solve(q, b, name: str = "operator") -> np.ndarray:
    """Solve ``Q x = b`` for symmetric positive definite ``Q``."""
    m = _symmetric_matrix(q, name)
    l = cholesky(m, name)
    return sla.cho_solve((l, True), np.asarray(b, dtype=float))


def spd_inverse(q, name: str = "operator") -> LinearOperator:
    m = _symmetric_matrix(q, name)
    l = cholesky(m, name)
    inv = sla.cho_solve((l, True), np.eye(m.shape[0]))
    inv = 0.5 * (inv + inv.T)
    if isinstance(q, LinearOperator):
        return LinearOperator(inv, source=q.target, target=q.source)
    return LinearOperator(inv)
