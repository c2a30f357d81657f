import json

import numpy as np
import pytest
from oracles import fd_dirichlet_laplacian

from projfield import cubical
from projfield.cubical import (
    build_complex,
    cell_faces,
    coboundary,
    dirichlet_laplacian,
    expected_cell_count,
    interior_vertices,
)
from projfield.errors import DegenerateComplexError, ResourceError, ValidationError


def test_counts_d1_i1():
    K = build_complex(1, 1)
    assert K.n_cells(0) == 3 and K.n_cells(1) == 2
    np.testing.assert_array_equal(K.vertex_coords().ravel(), [-1, 0, 1])


def test_counts_d2_i2():
    K = build_complex(2, 2)
    assert [K.n_cells(k) for k in range(3)] == [25, 40, 16]


def test_level_zero_is_the_cube():
    K = build_complex(1, 0)
    assert K.n_cells(0) == 2 and K.n_cells(1) == 1
    assert interior_vertices(K) == []


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("i", [1, 2, 3])
def test_count_formula_and_faces(d, i):
    K = build_complex(d, i)
    for k in range(d + 1):
        assert K.n_cells(k) == expected_cell_count(d, i, k)
    assert len(interior_vertices(K)) == (2 ** i - 1) ** d
    for k in range(1, d + 1):
        for j in range(K.n_cells(k)):
            assert len(cell_faces(K, k, j)) == 2 * k


def _boundary_matrix(K, k):
    b = np.zeros((K.n_cells(k - 1), K.n_cells(k)), dtype=int)
    for j in range(K.n_cells(k)):
        for f, sign in cell_faces(K, k, j):
            b[f, j] += sign
    return b


def test_boundary_of_boundary_vanishes():
    K = build_complex(3, 2)
    for k in (2, 3):
        assert not (_boundary_matrix(K, k - 1) @ _boundary_matrix(K, k)).any()


def test_subdivision_vertices_nested():
    coarse, fine = build_complex(2, 2), build_complex(2, 3)
    fine_pts = {tuple(p) for p in fine.vertex_coords()}
    assert all(tuple(p) in fine_pts for p in coarse.vertex_coords())


def test_interior_examples():
    assert len(interior_vertices(build_complex(1, 1))) == 1
    assert len(interior_vertices(build_complex(2, 2))) == 9


def test_coboundary_unit_center():
    d0 = coboundary(build_complex(1, 1), dirichlet=True)
    np.testing.assert_array_equal(d0 @ np.array([1]), [1, -1])


def test_coboundary_kills_constants():
    for d in (1, 2, 3):
        K = build_complex(d, 2)
        assert not (coboundary(K).dense() @ np.ones(K.n_cells(0), dtype=int)).any()


def test_coboundary_d2_center_stencil():
    d0 = coboundary(build_complex(2, 1), dirichlet=True)
    assert np.linalg.matrix_rank(d0.dense()) == 1
    assert np.abs(d0 @ np.array([1])).sum() == 4


@pytest.mark.parametrize("d,i", [(1, 3), (2, 3), (3, 2)])
def test_restricted_coboundary_injective(d, i):
    K = build_complex(d, i)
    assert np.linalg.matrix_rank(coboundary(K, dirichlet=True).dense()) == (2 ** i - 1) ** d


@pytest.mark.parametrize("d,k,i,factor", [(2, 1, 1, 1.0), (2, 1, 3, 1.0), (1, 0, 2, 0.5),
                                          (3, 0, 3, 1 / 64)])
def test_scaled_gram_factor(d, k, i, factor):
    g = cubical.gram(build_complex(d, i), k)
    np.testing.assert_array_equal(g.matrix, factor * np.eye(g.dim))


def test_dirichlet_gram_only_for_vertices():
    with pytest.raises(ValidationError):
        cubical.gram(build_complex(2, 2), 1, dirichlet=True)


def test_laplacian_small_cases():
    np.testing.assert_allclose(dirichlet_laplacian(build_complex(1, 1)).matrix, [[2.0]])
    tri = np.array([[2.0, -1, 0], [-1, 2, -1], [0, -1, 2]])
    np.testing.assert_allclose(dirichlet_laplacian(build_complex(1, 2)).matrix, 4 * tri)


@pytest.mark.parametrize("d,i", [(1, 4), (2, 2), (2, 4), (3, 3)])
def test_laplacian_matches_finite_differences(d, i):
    lap = dirichlet_laplacian(build_complex(d, i)).matrix
    assert np.abs(lap - fd_dirichlet_laplacian(d, i)).max() <= 1e-12
    assert np.linalg.eigvalsh(lap).min() > 0


def test_laplacian_independent_of_orientation():
    K = build_complex(2, 2)
    d0 = coboundary(K, dirichlet=True).dense().astype(float)
    flips = np.where(np.arange(d0.shape[0]) % 3 == 0, -1.0, 1.0)
    s = 4.0 ** (K.level - 1)
    np.testing.assert_allclose(s * (flips[:, None] * d0).T @ (flips[:, None] * d0),
                               dirichlet_laplacian(K).matrix)


def test_degenerate_and_capped():
    with pytest.raises(DegenerateComplexError):
        dirichlet_laplacian(build_complex(2, 0))
    with pytest.raises(ResourceError):
        build_complex(1, 7)
    with pytest.raises(ValidationError):
        build_complex(0, 1)


def test_level_cap_env_override(monkeypatch):
    monkeypatch.setenv(cubical.LEVEL_CAP_ENV, "2")
    with pytest.raises(ResourceError):
        build_complex(1, 3)
    assert build_complex(1, 2).level == 2


def test_summary_json():
    data = json.loads(json.dumps(build_complex(2, 2).summary()))
    assert data["cell_counts"] == [25, 40, 16] and data["interior_vertices"] == 9


@pytest.mark.parametrize("d,i", [(1, 3), (2, 2), (3, 2)])
def test_laplacian_matches_generic_gram_adjoint(d, i):
    from projfield.gramlin import LinearOperator, gram_adjoint
    K = cubical.build_complex(d, i)
    d0 = cubical.coboundary(K, dirichlet=True)
    d0f = LinearOperator(d0.dense().astype(float), d0.source, d0.target)
    generic = gram_adjoint(d0f, cubical.gram(K, 0, dirichlet=True), cubical.gram(K, 1)) @ d0f
    np.testing.assert_allclose(cubical.dirichlet_laplacian(K).matrix, generic.matrix, rtol=1e-14)
