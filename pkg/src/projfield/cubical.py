"""Dyadic cubical complexes on [-1, 1]^d and their cochain operators.

At level ``i`` the cube is cut into ``2^i`` slabs per axis (mesh ``1/2^(i-1)``).
Vertices carry integer ticks ``t`` in ``0..2^i`` per axis, the real coordinate
being ``-1 + 2 t / 2^i``; a tick equal to ``0`` or ``2^i`` lies on the boundary.

A k-cell is a pair ``(axes, anchor)``: the sorted tuple of axes it extends along
and the tick vector of its lowest corner. Cells are ordered lexicographically on
``(axes, anchor)``, and every cell is oriented by increasing axis order, so edges
point toward increasing coordinate.
"""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateComplexError, ResourceError, ValidationError
from .gramlin import GramForm, LinearOperator

DEFAULT_LEVEL_CAP = 6
LEVEL_CAP_ENV = "PROJFIELD_LEVEL_CAP"


def level_cap() -> int:
    raw = os.environ.get(LEVEL_CAP_ENV)
    if raw is None:
        return DEFAULT_LEVEL_CAP
    try:
        return int(raw)
    except ValueError as exc:
        raise ValidationError(f"{LEVEL_CAP_ENV} must be an integer, got {raw!r}") from exc


@dataclass(frozen=True, eq=False)
class CubicalComplex:
    dim: int
    level: int
    cells: tuple = field(repr=False)
    _index: tuple = field(repr=False)

    @property
    def ticks(self) -> int:
        """Number of slabs per axis."""
        return 2 ** self.level

    @property
    def label(self) -> str:
        return f"K(d={self.dim},i={self.level})"

    def space(self, k: int, dirichlet: bool = False) -> str:
        return f"C{k}{'D' if dirichlet else ''}[{self.label}]"

    def n_cells(self, k: int) -> int:
        return len(self.cells[k])

    def cell_index(self, k: int, cell) -> int:
        return self._index[k][cell]

    def has_cell(self, k: int, cell) -> bool:
        return cell in self._index[k]

    def vertex_coords(self) -> np.ndarray:
        anchors = np.array([a for _, a in self.cells[0]], dtype=float)
        return -1.0 + 2.0 * anchors / self.ticks

    def is_boundary_vertex(self, anchor) -> bool:
        n = self.ticks
        return any(t == 0 or t == n for t in anchor)

    def summary(self) -> dict:
        return {
            "dimension": self.dim,
            "level": self.level,
            "mesh": 2.0 / self.ticks,
            "cell_counts": [self.n_cells(k) for k in range(self.dim + 1)],
            "interior_vertices": len(interior_vertices(self)),
        }


def check_level(d: int, i: int, cap: int | None = None):
    """Validate ``(d, i)`` and enforce the level cap (read from the environment each call)."""
    if d < 1:
        raise ValidationError(f"dimension must be >= 1, got {d}")
    if i < 0:
        raise ValidationError(f"level must be >= 0, got {i}")
    cap = level_cap() if cap is None else cap
    if i > cap:
        raise ResourceError(f"level {i} exceeds level cap {cap} (set {LEVEL_CAP_ENV} to raise it)")


def build_complex(d: int, i: int, cap: int | None = None) -> CubicalComplex:
    """The level-``i`` dyadic subdivision of [-1, 1]^d."""
    check_level(d, i, cap)
    n = 2 ** i
    cells = []
    for k in range(d + 1):
        kcells = []
        for axes in itertools.combinations(range(d), k):
            ranges = [range(n) if a in axes else range(n + 1) for a in range(d)]
            kcells.extend((axes, anchor) for anchor in itertools.product(*ranges))
        cells.append(tuple(kcells))
    index = tuple({c: j for j, c in enumerate(kc)} for kc in cells)
    return CubicalComplex(d, i, tuple(cells), index)


def expected_cell_count(d: int, i: int, k: int) -> int:
    n = 2 ** i
    return comb(d, k) * n ** k * (n + 1) ** (d - k)


def interior_vertices(K: CubicalComplex) -> list[int]:
    return [j for j, (_, a) in enumerate(K.cells[0]) if not K.is_boundary_vertex(a)]


def cell_faces(K: CubicalComplex, k: int, j: int) -> list[tuple[int, int]]:
    """Signed (k-1)-faces of the j-th k-cell as ``(face_index, sign)``."""
    axes, anchor = K.cells[k][j]
    out = []
    for pos, a in enumerate(axes):
        rest = axes[:pos] + axes[pos + 1:]
        sign = (-1) ** pos
        upper = list(anchor)
        upper[a] += 1
        out.append((K.cell_index(k - 1, (rest, tuple(upper))), sign))
        out.append((K.cell_index(k - 1, (rest, anchor)), -sign))
    return out


def coboundary(K: CubicalComplex, dirichlet: bool = False) -> LinearOperator:
    """Sparse integer matrix of ``d: C^0 -> C^1``, head minus tail on each edge.

    With ``dirichlet`` the source is restricted to interior vertices.
    """
    n_e, n_v = K.n_cells(1), K.n_cells(0)
    heads, tails = np.empty(n_e, dtype=np.int64), np.empty(n_e, dtype=np.int64)
    for e, ((a,), anchor) in enumerate(K.cells[1]):
        head = list(anchor)
        head[a] += 1
        heads[e] = K.cell_index(0, ((), tuple(head)))
        tails[e] = K.cell_index(0, ((), anchor))
    rows = np.concatenate([np.arange(n_e), np.arange(n_e)])
    cols = np.concatenate([heads, tails])
    vals = np.concatenate([np.ones(n_e, dtype=np.int64), -np.ones(n_e, dtype=np.int64)])
    m = sp.csr_array((vals, (rows, cols)), shape=(n_e, n_v))
    if dirichlet:
        m = m[:, interior_vertices(K)]
    return LinearOperator(m, source=K.space(0, dirichlet), target=K.space(1))


def scale_factor(K: CubicalComplex, k: int) -> float:
    return 2.0 ** ((K.level - 1) * (2 * k - K.dim))


def gram(K: CubicalComplex, k: int, scaled: bool = True, dirichlet: bool = False) -> GramForm:
    """Cell-orthonormal inner product on k-cochains, optionally rescaled by 2^((i-1)(2k-d))."""
    if not 0 <= k <= K.dim:
        raise ValidationError(f"degree {k} out of range 0..{K.dim}")
    if dirichlet and k != 0:
        raise ValidationError("dirichlet restriction applies to 0-cochains only")
    n = len(interior_vertices(K)) if dirichlet else K.n_cells(k)
    if n == 0:
        raise DegenerateComplexError(f"{K.label} has no interior vertices")
    s = scale_factor(K, k) if scaled else 1.0
    return GramForm.identity(n, s, name=K.space(k, dirichlet))


def dirichlet_laplacian(K: CubicalComplex) -> LinearOperator:
    """``d0* d0`` on Dirichlet 0-cochains with the scaled forms (the 5-point style stencil)."""
    if K.level < 1 or not interior_vertices(K):
        raise DegenerateComplexError(f"{K.label} has no interior vertices")
    d0 = coboundary(K, dirichlet=True)
    # both forms are multiples of the identity, so the Gram-adjoint is a rescaled transpose;
    # avoiding the dense edge Gram keeps d=3 feasible
    ratio = scale_factor(K, 1) / scale_factor(K, 0)
    m = sp.csr_array(d0.matrix, dtype=float)
    lap = ratio * (m.T @ m).toarray()
    return LinearOperator(lap, d0.source, d0.source)

