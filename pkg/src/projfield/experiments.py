"""Declarative experiment configs, the runner, and JSON/CSV reports."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import __version__, projective, whitney
from .errors import ValidationError
from .kernels import kernel_oracle

SEED_REQUIRED = {"mc-pushforward", "equicontinuity"}


@dataclass
class ExperimentConfig:
    kind: str
    params: dict = field(default_factory=dict)
    output: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict) or "kind" not in data:
            raise ValidationError("config record needs a 'kind' field")
        params = {k: v for k, v in data.items() if k not in ("kind", "output", "params")}
        params.update(data.get("params") or {})
        return cls(data["kind"], params, data.get("output"))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(sorted(self.params.items()))}

    def validate(self):
        if self.kind not in EXPERIMENTS:
            raise ValidationError(f"kind: unknown experiment {self.kind!r}")
        for key, value in self.params.items():
            if "tolerance" in key and not (isinstance(value, (int, float)) and value > 0):
                raise ValidationError(f"{key}: tolerances must be strictly positive")
        if self.kind in SEED_REQUIRED and "seed" not in self.params:
            raise ValidationError("seed: required for sampling experiments")


@dataclass
class Report:
    config: dict
    checks: list[dict]
    tables: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def body(self) -> dict:
        """Everything except wall time; identical for identical configs."""
        return {
            "config": self.config,
            "checks": self.checks,
            "tables": self.tables,
            "environment": self.environment,
            "pass": self.passed,
        }

    def to_dict(self) -> dict:
        return {**self.body(), "wall_time": self.wall_time}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        return cls(data["config"], data["checks"], data.get("tables", {}),
                   data.get("environment", {}), data.get("wall_time", 0.0))

    def failures(self) -> list[str]:
        return [c["name"] for c in self.checks if not c["pass"]]


def environment_stamp() -> dict:
    return {"package": "projfield", "version": __version__, "precision": "float64",
            "numpy": np.__version__}


_RELATIONS = {
    "<=": lambda r, t: r <= t,
    "<": lambda r, t: r < t,
    ">": lambda r, t: r > t,
    ">=": lambda r, t: r >= t,
}


def record(name: str, residual: float, tolerance: float, relation: str = "<=") -> dict:
    """One check: passes when ``residual <relation> tolerance``.

    Contracts use ``<=``; negative controls use ``>``.
    """
    residual = float(residual)
    ok = _RELATIONS[relation](residual, tolerance)
    return {"name": name, "residual": residual, "tolerance": float(tolerance),
            "relation": relation, "pass": bool(ok)}


# -- individual experiments --------------------------------------------------


def _levels(p: dict, lowest: int) -> list[tuple[int, int]]:
    i = int(p.get("i", 3))
    if "j" in p:
        return [(i, int(p["j"]))]
    return [(i, j) for j in range(lowest, i)]


def _cochain_map(p):
    d = int(p.get("d", 2))
    out = []
    for i, j in _levels(p, 0):
        res = projective.check_cochain_map(projective.coarsening_pair(d, i, j))
        out.append(record(f"cochain-map d={d} {i}->{j}", res, 0.0))
    return out, {}


def _projective(p):
    d = int(p.get("d", 2))
    tol = float(p.get("tolerance", 1e-8))
    out = []
    for i, j in _levels(p, 1):
        out.append(record(f"projective d={d} {i}->{j}",
                          projective.check_projective_consistency(d, i, j), tol))
        if p.get("control", d >= 2):
            ctol = float(p.get("control_tolerance", 1e-3))
            out.append(record(f"unrenormalized control d={d} {i}->{j}",
                              projective.check_projective_consistency(d, i, j, False), ctol, ">"))
    return out, {}


def _mc_pushforward(p):
    d, i = int(p.get("d", 2)), int(p.get("i", 3))
    j = int(p.get("j", i - 1))
    n, seed = int(p.get("n", 100_000)), int(p["seed"])
    tol = float(p.get("tolerance", projective.pushforward_tolerance(n)))
    pair = projective.coarsening_pair(d, i, j)
    err = projective.pushforward_mc_check(projective.renormalized_laplacian(d, i), pair.p0,
                                          projective.renormalized_laplacian(d, j), n, seed)
    return [record(f"mc-pushforward d={d} {i}->{j} n={n}", err, tol)], {}


def _mesh_sequence(p) -> list[whitney.Mesh1D]:
    geometry = p.get("geometry", "circle")
    if geometry == "circle":
        length = float(p.get("length", 2 * np.pi))
        return [whitney.circle_mesh(int(n), length) for n in p.get("sizes", [8, 16, 32])]
    if geometry == "line":
        windows = p.get("windows", [[-1, 1, 4], [-2, 2, 16]])
        return [whitney.line_mesh(float(a), float(b), int(n)) for a, b, n in windows]
    raise ValidationError(f"geometry: unknown geometry {geometry!r}")


def _mesh_name(m: whitney.Mesh1D) -> str:
    if m.geometry == "circle":
        return f"circle N={m.n_vertices}"
    return f"line [{m.vertices[0]:g},{m.vertices[-1]:g}] h={m.h:g}"


def _bond_pairs(meshes):
    pairs = list(zip(meshes[:-1], meshes[1:]))
    if len(meshes) > 2:
        pairs.append((meshes[0], meshes[-1]))
    return pairs


def _whitney_isometry(p):
    tol = float(p.get("tolerance", 1e-12))
    meshes = _mesh_sequence(p)
    rng = np.random.default_rng(int(p.get("seed", 0)))
    out = []
    for m in meshes:
        c = rng.integers(-8, 9, size=m.n_dofs).astype(float)
        rw = whitney.de_rham(m, whitney.whitney_map(m, c))
        out.append(record(f"R W = Id, {_mesh_name(m)}", np.abs(rw - c).max(), 0.0))
    for coarse, fine in _bond_pairs(meshes):
        tag = f"{_mesh_name(coarse)} -> {_mesh_name(fine)}"
        bond = whitney.iw_map(coarse, fine)
        out.append(record(f"isometry {tag}", whitney.check_iw_isometry(coarse, fine, bond), tol))
        c = rng.integers(-8, 9, size=coarse.n_dofs).astype(float)
        wc = whitney.whitney_map(coarse, c)
        wf = whitney.whitney_map(fine, bond @ c)
        a, b = fine.element_params()
        probes = np.concatenate([fine.params, 0.5 * (a + b)])
        out.append(record(f"W_f I = W_c {tag}",
                          np.abs(wf.at_params(probes) - wc.at_params(probes)).max(), 0.0))
    return out, {}


def _oracle_for(p, mesh):
    if mesh.geometry == "circle":
        return kernel_oracle("circle", length=mesh.scale)
    return kernel_oracle("line")


def _covariance_consistency(p):
    tol = float(p.get("tolerance", 1e-6))
    q = int(p.get("quad_order", 8))
    meshes = _mesh_sequence(p)
    oracle = _oracle_for(p, meshes[0])
    out = []
    for coarse, fine in _bond_pairs(meshes):
        res = whitney.check_covariance_consistency(coarse, fine, oracle, q)
        out.append(record(f"covariance {_mesh_name(coarse)} -> {_mesh_name(fine)}", res, tol))
    return out, {}


def _fit_order(hs, errs) -> float:
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    return float(slope)


def _convergence(p):
    q = int(p.get("quad_order", 8))
    min_order = float(p.get("min_order", 1.5))
    meshes = _mesh_sequence({**p, "geometry": "circle"})
    oracle = _oracle_for(p, meshes[0])
    cov_rows = whitney.convergence_table(oracle, meshes, quad_order=q)
    interp = [whitney.interpolation_error(m, np.sin) for m in meshes]
    hs = [m.h for m in meshes]
    interp_orders = [None] + whitney.empirical_orders(hs, interp)
    tables = {
        "covariance_diagonal": cov_rows,
        "interpolation": [{"h": h, "error": e, "order": o}
                          for h, e, o in zip(hs, interp, interp_orders)],
    }
    out = []
    for name, errs in (("interpolation", interp), ("covariance-diagonal", [r["error"] for r in cov_rows])):
        growth = max(b / a for a, b in zip(errs[:-1], errs[1:]))
        out.append(record(f"{name} strictly decreasing (max error ratio)", growth, 1.0, "<"))
        out.append(record(f"{name} empirical order", _fit_order(hs, errs), min_order, ">="))
    return out, tables


def _equicontinuity(p):
    d, i = int(p.get("d", 2)), int(p.get("i", 3))
    count, seed = int(p.get("pairs", 1000)), int(p["seed"])
    tol = float(p.get("tolerance", 1e-12))
    spec = projective.renormalized_laplacian(d, i)
    bound = projective.covariance_norm(spec)
    rng = np.random.default_rng(seed)
    scales = rng.uniform(0.0, 3.0, size=(count, 1))
    h1 = rng.standard_normal((count, spec.space_dim)) * scales
    h2 = rng.standard_normal((count, spec.space_dim)) * scales
    slack = projective.equicontinuity_bound_check(spec, zip(h1, h2), bound)
    return [record(f"equicontinuity slack d={d} i={i}", slack, -tol, ">=")], {}


EXPERIMENTS: dict[str, tuple[str, Callable[[dict], tuple[list[dict], dict]]]] = {
    "cochain-map": ("exact integer check of P1 d_fine = d_coarse P0", _cochain_map),
    "projective": ("covariance consistency of the renormalized lattice fields", _projective),
    "mc-pushforward": ("Monte-Carlo pushforward of fine samples to the coarse level", _mc_pushforward),
    "whitney-isometry": ("R W = Id, isometric bonding maps, W_fine I = W_coarse", _whitney_isometry),
    "covariance-consistency": ("I* A_fine I = A_coarse for discretized (1+Laplacian)^-1",
                               _covariance_consistency),
    "convergence": ("error trends of interpolation and discrete variance", _convergence),
    "equicontinuity": ("modulus-of-continuity bound for the characteristic functional",
                       _equicontinuity),
}


def run(config: ExperimentConfig) -> Report:
    config.validate()
    start = time.perf_counter()
    checks, tables = EXPERIMENTS[config.kind][1](config.params)
    report = Report(config.to_dict(), checks, tables, environment_stamp(),
                    time.perf_counter() - start)
    if config.output:
        with open(config.output, "w") as fh:
            fh.write(report.to_json())
    return report


def sweep(configs: list[ExperimentConfig]) -> Report:
    """Run configs in order; the aggregate fails if any member fails."""
    if not configs:
        raise ValidationError("configs: sweep needs at least one experiment")
    start = time.perf_counter()
    members = [run(c) for c in configs]
    checks, tables = [], {}
    for k, rep in enumerate(members):
        for c in rep.checks:
            checks.append({**c, "member": k, "kind": rep.config["kind"]})
        for name, rows in rep.tables.items():
            tables[f"{k}:{name}"] = rows
    config = {"sweep": [m.config for m in members]}
    return Report(config, checks, tables, environment_stamp(), time.perf_counter() - start)


CHECK_HEADER = ["member", "kind", "name", "residual", "tolerance", "relation", "pass"]
TABLE_HEADER = ["table", "h", "error", "order"]


def write_checks_csv(report: Report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CHECK_HEADER)
        for c in report.checks:
            w.writerow([c.get("member", 0), c.get("kind", report.config.get("kind", "")),
                        c["name"], repr(c["residual"]), repr(c["tolerance"]), c["relation"],
                        c["pass"]])


def write_tables_csv(report: Report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_HEADER)
        for name, rows in report.tables.items():
            for r in rows:
                w.writerow([name, repr(r["h"]), repr(r["error"]),
                            "" if r["order"] is None else repr(r["order"])])


def load_configs(path) -> list[ExperimentConfig]:
    """A JSON file holding one record, a list of records, or ``{"experiments": [...]}``."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path}: {exc}") from exc
    if isinstance(data, dict) and "experiments" in data:
        data = data["experiments"]
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list):
        raise ValidationError("config file must hold a record or a list of records")
    return [ExperimentConfig.from_dict(r) for r in data]


def describe() -> list[dict[str, Any]]:
    return [{"kind": k, "description": v[0]} for k, v in EXPERIMENTS.items()]
