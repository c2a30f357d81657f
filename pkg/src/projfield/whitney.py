"""Whitney and de Rham maps for piecewise-affine functions on 1-D meshes.

A mesh stores its vertices as *parameters* ``t`` and a ``scale``; the physical
coordinate is ``scale * t``. On the circle ``t`` is the arc fraction in
``[0, 1)`` and ``scale`` the circumference; on the line ``scale`` is 1. Nesting
tests and the bonding maps work on parameters, so dyadic meshes give exact
bonding matrices regardless of the circumference.

Cochains are indexed by the free vertices (``Mesh1D.dofs``): every vertex on the
circle, the interior vertices of the window on the line, whose two end vertices
carry the Dirichlet condition.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import QuadratureError, ValidationError
from .gramlin import GramForm, LinearOperator, spd_inverse
from .kernels import KernelOracle
from .projective import GaussianSpec


@dataclass(frozen=True, eq=False)
class Mesh1D:
    geometry: str
    params: np.ndarray
    scale: float = 1.0
    dofs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.array(self.params, dtype=float)
        if self.geometry not in ("circle", "line"):
            raise ValidationError(f"unknown geometry {self.geometry!r}")
        if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
            raise ValidationError("mesh vertices must be strictly increasing, at least two")
        if self.geometry == "circle" and (t[0] < 0 or t[-1] >= 1):
            raise ValidationError("circle parameters must lie in [0, 1)")
        if self.scale <= 0:
            raise ValidationError("mesh scale must be positive")
        t.setflags(write=False)
        object.__setattr__(self, "params", t)
        n = len(t)
        dofs = np.arange(n) if self.geometry == "circle" else np.arange(1, n - 1)
        object.__setattr__(self, "dofs", dofs)

    @property
    def vertices(self) -> np.ndarray:
        return self.scale * self.params

    @property
    def n_vertices(self) -> int:
        return len(self.params)

    @property
    def n_dofs(self) -> int:
        return len(self.dofs)

    @property
    def dirichlet_boundary(self) -> tuple[int, int] | None:
        return None if self.geometry == "circle" else (0, self.n_vertices - 1)

    def element_params(self) -> tuple[np.ndarray, np.ndarray]:
        """Left/right parameters of each element; the circle's last element closes at 1."""
        t = self.params
        if self.geometry == "circle":
            return t, np.append(t[1:], 1.0)
        return t[:-1], t[1:]

    def element_vertices(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_vertices
        left = np.arange(n) if self.geometry == "circle" else np.arange(n - 1)
        return left, (left + 1) % n

    def element_lengths(self) -> np.ndarray:
        a, b = self.element_params()
        return self.scale * (b - a)

    @property
    def h(self) -> float:
        return float(self.element_lengths().max())

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry,
            "scale": self.scale,
            "vertices": self.vertices.tolist(),
            "n_dofs": self.n_dofs,
            "h": self.h,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def circle_mesh(n: int, length: float = 2 * np.pi) -> Mesh1D:
    if n < 2:
        raise ValidationError("circle mesh needs at least 2 vertices")
    return Mesh1D("circle", np.arange(n) / n, float(length))


def line_mesh(a: float, b: float, n_elements: int) -> Mesh1D:
    """Uniform window ``[a, b]`` of the line with Dirichlet ends."""
    if n_elements < 2:
        raise ValidationError("line window needs at least 2 elements (one free vertex)")
    k = np.arange(n_elements + 1)
    return Mesh1D("line", a + (b - a) * k / n_elements)


def refine(mesh: Mesh1D) -> Mesh1D:
    """Insert every element midpoint."""
    a, b = mesh.element_params()
    t = np.sort(np.concatenate([mesh.params, 0.5 * (a + b)]))
    return Mesh1D(mesh.geometry, t, mesh.scale)


# -- Whitney and de Rham maps ------------------------------------------------


def full_values(mesh: Mesh1D, c) -> np.ndarray:
    """Vertex values from a dof vector, or a full vector checked for zero boundary values."""
    c = np.asarray(c, dtype=float)
    if c.shape == (mesh.n_dofs,):
        out = np.zeros(mesh.n_vertices)
        out[mesh.dofs] = c
        return out
    if c.shape == (mesh.n_vertices,):
        if mesh.dirichlet_boundary is not None and np.any(c[list(mesh.dirichlet_boundary)] != 0):
            raise ValidationError("cochain must vanish on the Dirichlet boundary")
        return c.copy()
    raise ValidationError(f"cochain of shape {c.shape} does not fit mesh with {mesh.n_dofs} dofs")


def _interpolate(knots, values, x, periodic_at=None):
    x = np.asarray(x, dtype=float)
    if periodic_at is not None:
        x = np.mod(x, periodic_at)
        knots = np.append(knots, periodic_at)
        values = np.append(values, values[0])
    flat = np.atleast_1d(x).ravel()
    out = np.zeros(flat.shape)
    inside = (flat >= knots[0]) & (flat <= knots[-1])
    xs = flat[inside]
    k = np.clip(np.searchsorted(knots, xs, side="right") - 1, 0, len(knots) - 2)
    lam = (xs - knots[k]) / (knots[k + 1] - knots[k])
    out[inside] = (1.0 - lam) * values[k] + lam * values[k + 1]
    return out.reshape(x.shape) if x.ndim else float(out[0])


class WhitneyFunction:
    """Continuous piecewise-affine function with prescribed vertex values."""

    def __init__(self, mesh: Mesh1D, values):
        self.mesh = mesh
        self.values = full_values(mesh, values)

    def __call__(self, x):
        m = self.mesh
        period = m.scale if m.geometry == "circle" else None
        return _interpolate(m.vertices, self.values, x, period)

    def at_params(self, t):
        """Evaluate at mesh parameters; exact arithmetic for dyadic meshes and values."""
        m = self.mesh
        period = 1.0 if m.geometry == "circle" else None
        return _interpolate(m.params, self.values, t, period)


def whitney_map(mesh: Mesh1D, c) -> WhitneyFunction:
    return WhitneyFunction(mesh, c)


def de_rham(mesh: Mesh1D, f, full: bool = False) -> np.ndarray:
    """Vertex values of ``f`` (called on physical coordinates), zero on the Dirichlet ends."""
    vals = np.asarray(f(mesh.vertices), dtype=float) * np.ones(mesh.n_vertices)
    if full:
        if mesh.dirichlet_boundary is not None:
            vals[list(mesh.dirichlet_boundary)] = 0.0
        return vals
    return vals[mesh.dofs]


def mass_matrix(mesh: Mesh1D) -> GramForm:
    """Whitney inner product ``int phi_v phi_w`` on the dofs."""
    n = mesh.n_vertices
    m = np.zeros((n, n))
    left, right = mesh.element_vertices()
    ell = mesh.element_lengths()
    np.add.at(m, (left, left), ell / 3)
    np.add.at(m, (right, right), ell / 3)
    np.add.at(m, (left, right), ell / 6)
    np.add.at(m, (right, left), ell / 6)
    d = mesh.dofs
    return GramForm(m[np.ix_(d, d)], name=f"whitney[{mesh.geometry},{n}]")


def _check_nested(coarse: Mesh1D, fine: Mesh1D):
    if coarse.geometry != fine.geometry:
        raise ValidationError("meshes have different geometries")
    if coarse.scale != fine.scale:
        raise ValidationError("meshes have different scales")
    if not np.isin(coarse.params, fine.params).all():
        raise ValidationError("coarse vertices are not all fine vertices; meshes are not nested")
    if coarse.geometry == "line" and (coarse.params[0] < fine.params[0]
                                      or coarse.params[-1] > fine.params[-1]):
        raise ValidationError("coarse window is not contained in the fine window")


def iw_map(coarse: Mesh1D, fine: Mesh1D) -> LinearOperator:
    """Bonding map ``c -> R_fine W_coarse c`` from coarse dofs to fine dofs."""
    _check_nested(coarse, fine)
    t = fine.params[fine.dofs]
    cols = []
    for k in range(coarse.n_dofs):
        e = np.zeros(coarse.n_dofs)
        e[k] = 1.0
        cols.append(WhitneyFunction(coarse, e).at_params(t))
    m = np.column_stack(cols) if cols else np.zeros((fine.n_dofs, 0))
    return LinearOperator(m, source=f"W[{coarse.n_vertices}]", target=f"W[{fine.n_vertices}]")


def check_iw_isometry(coarse: Mesh1D, fine: Mesh1D, bond: LinearOperator | None = None) -> float:
    """``|I^T M_fine I - M_coarse|_max``."""
    i = iw_map(coarse, fine).matrix if bond is None else bond.matrix
    r = i.T @ mass_matrix(fine).matrix @ i - mass_matrix(coarse).matrix
    return float(np.abs(r).max())


# -- discretized covariance --------------------------------------------------


def _split_points(lo, hi, cuts):
    """Sorted breakpoints ``lo, clip(cuts), hi`` along the last axis."""
    pts = np.concatenate([lo[..., None], np.clip(cuts, lo[..., None], hi[..., None]), hi[..., None]],
                         axis=-1)
    return np.sort(pts, axis=-1)


def _check_split(lo, hi, kinks, width):
    inside = (kinks > lo[..., None] + 1e-12 * width) & (kinks < hi[..., None] - 1e-12 * width)
    if np.any(inside):
        raise QuadratureError("a quadrature panel contains an unsplit kernel kink")


def _pair_integrals(oracle, ea, eb, fa, fb, shifts, nodes, weights, width):
    """Local 2x2 kernel integrals for element pairs (outer ``[ea, eb]``, inner ``[fa, fb]``)."""
    outer_cuts = np.concatenate([fa[:, None] + shifts, fb[:, None] + shifts], axis=1)
    opts = _split_points(ea, eb, outer_cuts)
    olo, ohi = opts[:, :-1], opts[:, 1:]
    _check_split(olo, ohi, outer_cuts[:, None, :], width)
    ohalf = 0.5 * (ohi - olo)
    x = (0.5 * (ohi + olo))[..., None] + ohalf[..., None] * nodes  # (P, outer panels, q)
    wx = ohalf[..., None] * weights

    inner_cuts = x[..., None] - shifts
    ipts = _split_points(np.broadcast_to(fa[:, None, None], x.shape),
                         np.broadcast_to(fb[:, None, None], x.shape), inner_cuts)
    ilo, ihi = ipts[..., :-1], ipts[..., 1:]
    _check_split(ilo, ihi, inner_cuts[..., None, :], width)
    ihalf = 0.5 * (ihi - ilo)
    y = (0.5 * (ihi + ilo))[..., None] + ihalf[..., None] * nodes  # (P, op, q, inner panels, q)
    wy = ihalf[..., None] * weights

    g = oracle(x[..., None, None], y)
    ex_len = (eb - ea)[:, None, None]
    fy = (fa[:, None, None, None, None], fb[:, None, None, None, None])
    fy_len = fy[1] - fy[0]
    phix = ((eb[:, None, None] - x) / ex_len, (x - ea[:, None, None]) / ex_len)
    phiy = ((fy[1] - y) / fy_len, (y - fy[0]) / fy_len)
    inner = [np.sum(g * p * wy, axis=(-2, -1)) for p in phiy]
    return [[np.sum(phix[a] * inner[b] * wx, axis=(-2, -1)) for b in range(2)] for a in range(2)]


def kernel_matrix(mesh: Mesh1D, oracle: KernelOracle, quad_order: int = 8) -> np.ndarray:
    """``K_vw = int int G(x, y) phi_v(x) phi_w(y) dx dy`` over dofs.

    Each element pair is integrated with tensor Gauss-Legendre panels. The outer
    (x) element is split where ``x - s`` meets an end of the inner element, the
    inner (y) element is split at ``y = x - s``, for every kink shift ``s`` of the
    kernel; the integrand is smooth on every panel.
    """
    if quad_order < 2:
        raise ValidationError("quadrature order must be >= 2")
    if (oracle.geometry == "circle") != (mesh.geometry == "circle"):
        raise ValidationError("kernel geometry does not match mesh geometry")
    if oracle.geometry == "circle" and not np.isclose(oracle.length, mesh.scale, rtol=1e-14):
        raise ValidationError("kernel circumference does not match the mesh")
    nodes, weights = leggauss(quad_order)
    ta, tb = mesh.element_params()
    xa, xb = mesh.scale * ta, mesh.scale * tb
    left, right = mesh.element_vertices()
    ne = len(xa)
    shifts = np.array(oracle.kink_shifts())
    width = mesh.h

    n = mesh.n_vertices
    kfull = np.zeros((n, n))
    pairs = np.arange(ne * ne)
    chunk = max(1, 60_000 // (len(shifts) ** 2 * quad_order ** 2))
    for start in range(0, len(pairs), chunk):
        idx = pairs[start:start + chunk]
        e_idx, f_idx = idx // ne, idx % ne
        local = _pair_integrals(oracle, xa[e_idx], xb[e_idx], xa[f_idx], xb[f_idx],
                                shifts, nodes, weights, width)
        vx = (left[e_idx], right[e_idx])
        vy = (left[f_idx], right[f_idx])
        for a in range(2):
            for b in range(2):
                np.add.at(kfull, (vx[a], vy[b]), local[a][b])
    d = mesh.dofs
    k = kfull[np.ix_(d, d)]
    return 0.5 * (k + k.T)


def discretized_covariance(mesh: Mesh1D, oracle: KernelOracle, quad_order: int = 8) -> LinearOperator:
    """``A = M^{-1} K``: the kernel operator compressed onto the Whitney space."""
    k = kernel_matrix(mesh, oracle, quad_order)
    a = mass_matrix(mesh).solve(k)
    space = f"W[{mesh.n_vertices}]"
    return LinearOperator(a, space, space)


def covariance_spec(mesh: Mesh1D, oracle: KernelOracle, quad_order: int = 8) -> GaussianSpec:
    m = mass_matrix(mesh)
    k = kernel_matrix(mesh, oracle, quad_order)
    a = m.solve(k)
    prec = spd_inverse(k).matrix @ m.matrix
    space = f"W[{mesh.n_vertices}]"
    return GaussianSpec(m, LinearOperator(prec, space, space), LinearOperator(a, space, space),
                        label=f"whitney({mesh.geometry},{mesh.n_vertices})")


def check_covariance_consistency(coarse: Mesh1D, fine: Mesh1D, oracle: KernelOracle,
                                 quad_order: int = 8) -> float:
    """Relative Frobenius residual of ``I* A_fine I - A_coarse`` (Whitney-Gram adjoint)."""
    bond = iw_map(coarse, fine).matrix
    mc, mf = mass_matrix(coarse), mass_matrix(fine)
    a_c = discretized_covariance(coarse, oracle, quad_order).matrix
    a_f = discretized_covariance(fine, oracle, quad_order).matrix
    pulled = mc.solve(bond.T @ mf.matrix @ a_f @ bond)
    return float(np.linalg.norm(pulled - a_c) / np.linalg.norm(a_c))


# -- convergence ---------------------------------------------------------------


def covariance_kernel_diagonal(mesh: Mesh1D, oracle: KernelOracle, x, quad_order: int = 8):
    """Variance at ``x`` of the field ``W c`` with ``c`` distributed by the discretized covariance."""
    m = mass_matrix(mesh)
    k = kernel_matrix(mesh, oracle, quad_order)
    sigma = m.solve(m.solve(k).T)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    phi = np.column_stack([WhitneyFunction(mesh, e)(x) for e in np.eye(mesh.n_dofs)])
    return np.einsum("pi,ij,pj->p", phi, sigma, phi)


def interpolation_error(mesh: Mesh1D, f, quad_order: int = 8) -> float:
    """``|W R f - f|`` in L^2 over the mesh support, by per-element Gauss-Legendre."""
    nodes, weights = leggauss(quad_order)
    ta, tb = mesh.element_params()
    a, b = mesh.scale * ta, mesh.scale * tb
    half = 0.5 * (b - a)
    x = (0.5 * (a + b))[:, None] + half[:, None] * nodes
    w = WhitneyFunction(mesh, de_rham(mesh, f, full=True))
    err = w(x) - f(x)
    return float(np.sqrt(np.sum(half[:, None] * weights * err ** 2)))


def empirical_orders(hs, errors) -> list[float]:
    hs, errors = np.asarray(hs, float), np.asarray(errors, float)
    return (np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])).tolist()


def convergence_table(oracle: KernelOracle, meshes, probes=None, quad_order: int = 8) -> list[dict]:
    """Rows ``{h, error, order}`` with ``error = max_x |variance_h(x) - G(x, x)|`` over ``probes``."""
    if len(meshes) < 3:
        raise ValidationError("convergence table needs at least 3 meshes")
    if probes is None:
        probes = default_probes(meshes[0])
    probes = np.asarray(probes, dtype=float)
    exact = oracle(probes, probes)
    hs, errs = [], []
    for mesh in meshes:
        approx = covariance_kernel_diagonal(mesh, oracle, probes, quad_order)
        hs.append(mesh.h)
        errs.append(float(np.abs(approx - exact).max()))
    orders = [None] + empirical_orders(hs, errs)
    return [{"h": h, "error": e, "order": o} for h, e, o in zip(hs, errs, orders)]


def default_probes(mesh: Mesh1D) -> np.ndarray:
    """Interior vertices of the coarsest mesh; they remain vertices of every refinement."""
    return mesh.vertices[mesh.dofs]
