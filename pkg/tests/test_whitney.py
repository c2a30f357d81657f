import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hat, kernel_entry_dblquad
from projfield import whitney
from projfield.errors import QuadratureError, ValidationError
from projfield.gramlin import LinearOperator
from projfield.kernels import KernelOracle, kernel_oracle
from projfield.projective import characteristic_functional
from projfield.whitney import (
    Mesh1D,
    check_covariance_consistency,
    check_iw_isometry,
    circle_mesh,
    de_rham,
    discretized_covariance,
    iw_map,
    kernel_matrix,
    line_mesh,
    mass_matrix,
    refine,
    whitney_map,
)

CIRCLE = KernelOracle("circle", 2 * np.pi)
LINE = KernelOracle("line")


def test_hat_values():
    m = line_mesh(0.0, 1.0, 2)
    phi = whitney_map(m, [1.0])
    np.testing.assert_allclose(phi(np.array([0.0, 0.25, 0.5, 0.75, 1.0])), [0, 0.5, 1, 0.5, 0])
    np.testing.assert_allclose(phi(np.array([0.3, 0.8])), hat(m.vertices, 1, np.array([0.3, 0.8])))


def test_partition_of_unity_on_circle():
    m = circle_mesh(7)
    x = np.linspace(-3, 10, 401)
    total = sum(whitney_map(m, e)(x) for e in np.eye(7))
    np.testing.assert_allclose(total, 1.0, atol=1e-14)


def test_circle_hat_wraps():
    m = circle_mesh(4, 1.0)
    x = np.array([0.9, 0.95, 0.05])
    np.testing.assert_allclose(whitney_map(m, [1, 0, 0, 0])(x), hat(m.vertices, 0, x, 1.0), atol=1e-15)


def test_midpoint_average():
    m = circle_mesh(5)
    c = np.arange(5.0)
    f = whitney_map(m, c)
    a, b = m.element_params()
    mid = m.scale * 0.5 * (a + b)
    np.testing.assert_allclose(f(mid), 0.5 * (c + np.roll(c, -1)), atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2 ** 31 - 1))
def test_de_rham_after_whitney_is_identity(n, seed):
    m = circle_mesh(n)
    c = np.random.default_rng(seed).standard_normal(n)
    np.testing.assert_allclose(de_rham(m, whitney_map(m, c)), c, atol=1e-12)


def test_de_rham_sine():
    np.testing.assert_allclose(de_rham(circle_mesh(4, 1.0), lambda x: np.sin(2 * np.pi * x)),
                               [0, 1, 0, -1], atol=1e-15)


def test_de_rham_line_drops_boundary():
    m = line_mesh(-1, 1, 4)
    np.testing.assert_array_equal(de_rham(m, lambda x: x + 3), [2.5, 3, 3.5])
    np.testing.assert_array_equal(de_rham(m, lambda x: x + 3, full=True), [0, 2.5, 3, 3.5, 0])
    with pytest.raises(ValidationError):
        whitney_map(m, [1, 0, 0, 0, 0])


def test_mass_matrix_entries():
    m = mass_matrix(circle_mesh(4, 1.0)).matrix
    assert m[0, 0] == pytest.approx(1 / 6) and m[0, 1] == pytest.approx(1 / 24)
    assert m[0, 2] == 0
    np.testing.assert_allclose(m.sum(axis=1), 0.25)
    np.testing.assert_allclose(mass_matrix(line_mesh(-1, 1, 2)).matrix, [[2 / 3]])


def test_mass_matrix_matches_quadrature():
    m = refine(line_mesh(0, 1, 3))
    x = np.linspace(0, 1, 20001)
    phis = np.array([hat(m.vertices, v, x) for v in m.dofs])
    quad = np.trapezoid(phis[:, None, :] * phis[None, :, :], x, axis=-1)
    np.testing.assert_allclose(mass_matrix(m).matrix, quad, atol=1e-7)


def test_iw_map_circle_columns():
    i = iw_map(circle_mesh(2), circle_mesh(4)).matrix
    np.testing.assert_array_equal(i, [[1, 0], [0.5, 0.5], [0, 1], [0.5, 0.5]])


def test_iw_map_line_window_extension():
    i = iw_map(line_mesh(-1, 1, 2), line_mesh(-2, 2, 8)).matrix
    np.testing.assert_array_equal(i[:, 0], [0, 0, 0.5, 1, 0.5, 0, 0])


def test_iw_map_composes():
    a, b, c = circle_mesh(3), circle_mesh(6), circle_mesh(12)
    np.testing.assert_allclose(iw_map(a, c).matrix, iw_map(b, c).matrix @ iw_map(a, b).matrix,
                               atol=1e-15)
    d, e, f = circle_mesh(4), circle_mesh(8), circle_mesh(16)
    np.testing.assert_array_equal(iw_map(d, f).matrix, iw_map(e, f).matrix @ iw_map(d, e).matrix)


def test_non_nested_rejected():
    with pytest.raises(ValidationError):
        iw_map(circle_mesh(3), circle_mesh(4))
    with pytest.raises(ValidationError):
        iw_map(line_mesh(-2, 2, 4), line_mesh(-1, 1, 8))
    with pytest.raises(ValidationError):
        iw_map(circle_mesh(4, 1.0), circle_mesh(8, 2.0))


@pytest.mark.parametrize("coarse,fine", [
    (circle_mesh(4), circle_mesh(8)),
    (circle_mesh(8), circle_mesh(32)),
    (line_mesh(-1, 1, 4), line_mesh(-2, 2, 16)),
])
def test_iw_isometry(coarse, fine):
    assert check_iw_isometry(coarse, fine) <= 1e-14


def test_iw_isometry_detects_perturbation():
    coarse, fine = circle_mesh(4), circle_mesh(8)
    i = iw_map(coarse, fine).matrix.copy()
    i[1, 0] += 0.1
    assert check_iw_isometry(coarse, fine, LinearOperator(i)) > 1e-3


@pytest.mark.parametrize("oracle,mesh,pairs", [
    (CIRCLE, circle_mesh(6), [(0, 0), (0, 1), (0, 3), (5, 0)]),
    (LINE, line_mesh(-1, 1, 4), [(0, 0), (0, 1), (0, 2)]),
])
def test_kernel_entries_vs_adaptive_quadrature(oracle, mesh, pairs):
    k = kernel_matrix(mesh, oracle)
    period = mesh.scale if mesh.geometry == "circle" else None
    for a, b in pairs:
        ref = kernel_entry_dblquad(oracle, mesh.vertices, mesh.dofs[a], mesh.dofs[b], period,
                                   kinks=oracle.kink_shifts())
        assert k[a, b] == pytest.approx(ref, rel=1e-12)


def test_kernel_matrix_symmetric_positive():
    k = kernel_matrix(circle_mesh(16), CIRCLE)
    np.testing.assert_array_equal(k, k.T)
    assert np.linalg.eigvalsh(k).min() > 0


def test_constants_are_eigenvectors():
    # (1 - d^2)^{-1} fixes constants; Whitney spaces contain them on the circle
    a = discretized_covariance(circle_mesh(32), CIRCLE).matrix
    np.testing.assert_allclose(a @ np.ones(32), 1.0, atol=1e-3)


def test_covariance_spectrum():
    mesh = circle_mesh(16)
    a = discretized_covariance(mesh, CIRCLE).matrix
    m = mass_matrix(mesh).matrix
    np.testing.assert_allclose(m @ a, (m @ a).T, atol=1e-13)
    ev = np.linalg.eigvals(a).real
    assert ev.min() > 0 and ev.max() <= 1 + 1e-10


def test_circle_green_diagonal():
    assert CIRCLE(0.3, 0.3) == pytest.approx(0.5 / np.tanh(np.pi), rel=1e-15)
    assert CIRCLE(0.0, 2 * np.pi) == pytest.approx(CIRCLE(0.0, 0.0))


def test_circle_green_matches_fourier():
    rng = np.random.default_rng(4)
    x, y = rng.uniform(0, 2 * np.pi, (2, 20))
    np.testing.assert_allclose(CIRCLE.fourier(x, y), CIRCLE(x, y), atol=1e-10)
    plain = CIRCLE.fourier(0.0, 0.0, accelerate=False)
    assert 1e-6 < abs(plain - CIRCLE(0.0, 0.0)) < 1e-4


def test_line_green_solves_ode():
    x, y, h = np.array([-1.3, 0.4, 2.0]), 0.1, 1e-3
    g = lambda s: LINE(s, y)
    second = (g(x + h) - 2 * g(x) + g(x - h)) / h ** 2
    np.testing.assert_allclose(g(x) - second, 0.0, atol=1e-4)
    jump = (g(y + h) - g(y)) / h - (g(y) - g(y - h)) / h
    assert jump == pytest.approx(-1.0, abs=1e-3)


def test_line_kernel_rows_decay():
    k = kernel_matrix(line_mesh(-4, 4, 16), LINE)
    row = k[7]
    assert np.all(np.diff(row[7:]) < 0) and np.all(np.diff(row[:8]) > 0)


def test_oracle_validation():
    with pytest.raises(ValidationError):
        KernelOracle("circle", -1.0)
    with pytest.raises(ValidationError):
        kernel_oracle("matern")
    with pytest.raises(ValidationError):
        LINE.fourier(0, 0)
    assert kernel_oracle("exponential").geometry == "line"


@pytest.mark.parametrize("coarse,fine,oracle", [
    (circle_mesh(8), circle_mesh(16), CIRCLE),
    (circle_mesh(8), circle_mesh(32), CIRCLE),
    (line_mesh(-1, 1, 4), line_mesh(-2, 2, 16), LINE),
])
def test_covariance_consistency(coarse, fine, oracle):
    assert check_covariance_consistency(coarse, fine, oracle) <= 1e-10


def test_low_quadrature_breaks_consistency():
    assert check_covariance_consistency(circle_mesh(8), circle_mesh(16), CIRCLE, quad_order=2) > 1e-4


def test_transport_of_characteristic_functional():
    coarse, fine = circle_mesh(8), circle_mesh(16)
    s_c = whitney.covariance_spec(coarse, CIRCLE)
    s_f = whitney.covariance_spec(fine, CIRCLE)
    i = iw_map(coarse, fine).matrix
    rng = np.random.default_rng(8)
    for _ in range(20):
        c = rng.standard_normal(8)
        # pairing <h, I c>_fine equals <I^T M_f h, c>; test functionals pushed by I
        h_f = i @ c
        h_c = mass_matrix(coarse).solve(i.T @ mass_matrix(fine).matrix @ h_f)
        assert characteristic_functional(s_f, h_f) == pytest.approx(
            characteristic_functional(s_c, h_c), abs=1e-10)


def test_quadrature_order_validation():
    with pytest.raises((ValidationError, QuadratureError)):
        kernel_matrix(circle_mesh(4), CIRCLE, quad_order=0)


def test_quadrature_split_guard():
    with pytest.raises(QuadratureError):
        whitney._check_split(np.array([0.0]), np.array([1.0]), np.array([0.5]), np.array([1.0]))


def test_interpolation_error_rate():
    f = lambda x: np.sin(x) + np.cos(3 * x)
    errs = [whitney.interpolation_error(circle_mesh(n), f) for n in (16, 32, 64)]
    orders = whitney.empirical_orders([1, 0.5, 0.25], errs)
    assert all(o == pytest.approx(2.0, abs=0.1) for o in orders)


def test_convergence_table_shape_and_decrease():
    meshes = [circle_mesh(n) for n in (8, 16, 32)]
    rows = whitney.convergence_table(CIRCLE, meshes)
    assert [r["order"] is None for r in rows] == [True, False, False]
    errs = [r["error"] for r in rows]
    assert errs[0] > errs[1] > errs[2]
    with pytest.raises(ValidationError):
        whitney.convergence_table(CIRCLE, meshes[:2])


def test_mesh_validation_and_json():
    with pytest.raises(ValidationError):
        Mesh1D("circle", [0.0, 0.5, 1.0])
    with pytest.raises(ValidationError):
        Mesh1D("line", [0.0, 0.0, 1.0])
    with pytest.raises(ValidationError):
        line_mesh(0, 1, 1)
    d = json.loads(circle_mesh(4, 1.0).to_json())
    assert d["vertices"] == [0, 0.25, 0.5, 0.75] and d["n_dofs"] == 4
