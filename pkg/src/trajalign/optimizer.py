"""Sparse Gauss-Newton / Levenberg-Marquardt solver for the pose graph.

Each odometry edge contributes a 3-vector residual weighted by its
information matrix. Each vicinity edge contributes the scalar residual
``r = sqrt(omega_wifi * e_wifi(d))`` so that ``r**2`` is exactly its term in
the total cost. The fixed node is eliminated from the parameter vector, which
keeps it bit-identical through the solve.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from trajalign.core import PoseGraph, wrap_angles
from trajalign.graph import EdgeArrays

logger = logging.getLogger(__name__)

ConvergenceReason = Literal["cost_tol", "step_tol", "max_iter", "stalled"]

_LAMBDA_MAX = 1e16
_GN_HALVINGS = 20


class SolverError(RuntimeError):
    """The damped normal equations could not be solved."""


@dataclass(slots=True)
class SolverConfig:
    algorithm: Literal["gauss_newton", "levenberg_marquardt"] = "levenberg_marquardt"
    max_iterations: int = 100
    cost_tolerance: float = 1e-6
    step_tolerance: float = 1e-6
    lm_lambda_init: float = 1e-4
    lm_lambda_up: float = 10.0
    lm_lambda_down: float = 0.1

    def __post_init__(self) -> None:
        if self.algorithm not in ("gauss_newton", "levenberg_marquardt"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.cost_tolerance <= 0 or self.step_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if not (self.lm_lambda_init > 0 and self.lm_lambda_up > 1.0 > self.lm_lambda_down > 0):
            raise ValueError("need lambda_init > 0 and lambda_up > 1 > lambda_down > 0")


@dataclass(frozen=True, slots=True)
class IterationRecord:
    iteration: int
    lam: float
    cost: float
    step_norm: float
    accepted: bool


@dataclass(slots=True)
class SolveReport:
    initial_cost: float
    final_cost: float = math.nan
    iterations: list[IterationRecord] = field(default_factory=list)
    cost_trace: list[float] = field(default_factory=list)
    convergence_reason: ConvergenceReason = "max_iter"

    @property
    def iterations_run(self) -> int:
        return len(self.iterations)

    @property
    def converged(self) -> bool:
        return self.convergence_reason in ("cost_tol", "step_tol")

    def to_text(self) -> str:
        lines = [
            f"# initial_cost {self.initial_cost:.6f}",
            f"# final_cost {self.final_cost:.6f}",
            f"# convergence_reason {self.convergence_reason}",
            "# iter lambda cost step_norm accepted",
        ]
        for rec in self.iterations:
            lines.append(
                f"{rec.iteration} {rec.lam:.6e} {rec.cost:.6f} {rec.step_norm:.6e} {int(rec.accepted)}"
            )
        return "\n".join(lines) + "\n"


@dataclass(slots=True)
class NormalSystem:
    """Gauss-Newton normal equations ``H delta = -b`` over the free nodes."""

    H: sp.csc_matrix
    b: np.ndarray
    cost: float


def _free_columns(n_nodes: int, fixed: int) -> np.ndarray:
    """Parameter offset for each node; -1 marks the eliminated fixed node."""
    idx = np.arange(n_nodes)
    col = np.where(idx < fixed, idx, idx - 1) * 3
    col[fixed] = -1
    return col


def odometry_jacobians(arrays: EdgeArrays, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residuals ``(E, 3)`` and Jacobians wrt the source and target poses ``(E, 3, 3)``."""
    e = arrays.odometry_residuals(X)
    pa, pb = X[arrays.odo_a], X[arrays.odo_b]
    c, s = np.cos(pa[:, 2]), np.sin(pa[:, 2])
    wx, wy = pb[:, 0] - pa[:, 0], pb[:, 1] - pa[:, 1]
    E = len(e)
    Ja = np.zeros((E, 3, 3))
    Jb = np.zeros((E, 3, 3))
    Ja[:, 0, 0], Ja[:, 0, 1], Ja[:, 0, 2] = -c, -s, -s * wx + c * wy
    Ja[:, 1, 0], Ja[:, 1, 1], Ja[:, 1, 2] = s, -c, -c * wx - s * wy
    Ja[:, 2, 2] = -1.0
    Jb[:, 0, 0], Jb[:, 0, 1] = c, s
    Jb[:, 1, 0], Jb[:, 1, 1] = -s, c
    Jb[:, 2, 2] = 1.0
    return e, Ja, Jb


def wifi_jacobians(arrays: EdgeArrays, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residuals ``sqrt(w * e_wifi)`` and their gradient wrt the ``b`` node's (x, y).

    The gradient wrt the ``a`` node is the negation; headings do not enter.
    Edges below ``d_min`` (and, without ramp extension, beyond ``d_max``)
    are inactive with a zero gradient. At ``d_max`` itself the ramp-side
    slope is used.
    """
    delta = X[arrays.vic_b, :2] - X[arrays.vic_a, :2]
    d = np.hypot(delta[:, 0], delta[:, 1])
    r = np.sqrt(arrays.vic_w * arrays.wifi_errors(X))
    slope = arrays.vic_w * arrays.vic_emax / (arrays.vic_dmax - arrays.vic_dmin)
    active = (d > arrays.vic_dmin) & ((d <= arrays.vic_dmax) | arrays.vic_ramp) & (r > 0)
    dr_dd = np.zeros_like(d)
    dr_dd[active] = slope[active] / (2.0 * r[active])
    g = np.zeros_like(delta)
    g[active] = (dr_dd[active] / d[active])[:, None] * delta[active]
    return r, g


def _assemble(arrays: EdgeArrays, X: np.ndarray, fixed: int) -> NormalSystem:
    n = len(X)
    col = _free_columns(n, fixed)
    dim = 3 * (n - 1)
    rows_l: list[np.ndarray] = []
    cols_l: list[np.ndarray] = []
    vals_l: list[np.ndarray] = []
    b = np.zeros(dim)
    cost = 0.0
    offs = np.arange(3)

    def add_blocks(ia: np.ndarray, ib: np.ndarray, Ja: np.ndarray, Jb: np.ndarray, W: np.ndarray, res: np.ndarray) -> None:
        # Ja, Jb: (E, m, 3); W: (E, m, m); res: (E, m)
        WJa = np.einsum("eij,ejk->eik", W, Ja)
        WJb = np.einsum("eij,ejk->eik", W, Jb)
        We = np.einsum("eij,ej->ei", W, res)
        for (ni, Ji), (nj, WJj) in (
            ((ia, Ja), (ia, WJa)), ((ia, Ja), (ib, WJb)), ((ib, Jb), (ia, WJa)), ((ib, Jb), (ib, WJb))
        ):
            block = np.einsum("eji,ejk->eik", Ji, WJj)
            ci, cj = col[ni], col[nj]
            keep = (ci >= 0) & (cj >= 0)
            r = (ci[keep][:, None, None] + offs[None, :, None]).repeat(3, axis=2)
            c = (cj[keep][:, None, None] + offs[None, None, :]).repeat(3, axis=1)
            rows_l.append(r.ravel())
            cols_l.append(c.ravel())
            vals_l.append(block[keep].ravel())
        for ni, Ji in ((ia, Ja), (ib, Jb)):
            g = np.einsum("eji,ej->ei", Ji, We)
            ci = col[ni]
            keep = ci >= 0
            np.add.at(b, (ci[keep][:, None] + offs[None, :]).ravel(), g[keep].ravel())

    if len(arrays.odo_a):
        e, Ja, Jb = odometry_jacobians(arrays, X)
        W = arrays.odo_omega
        cost += float(np.einsum("ei,eij,ej->", e, W, e))
        add_blocks(arrays.odo_a, arrays.odo_b, Ja, Jb, W, e)
    if len(arrays.vic_a):
        r, g = wifi_jacobians(arrays, X)
        cost += float(np.dot(r, r))
        act = np.flatnonzero(g.any(axis=1))
        if act.size:
            Jb = np.zeros((act.size, 1, 3))
            Jb[:, 0, :2] = g[act]
            W = np.ones((act.size, 1, 1))
            add_blocks(arrays.vic_a[act], arrays.vic_b[act], -Jb, Jb, W, r[act][:, None])

    if rows_l:
        H = sp.coo_matrix(
            (np.concatenate(vals_l), (np.concatenate(rows_l), np.concatenate(cols_l))), shape=(dim, dim)
        ).tocsc()
    else:
        H = sp.csc_matrix((dim, dim))
    H.sum_duplicates()
    return NormalSystem(H, b, cost)


def linearize(graph: PoseGraph) -> NormalSystem:
    """Normal equations at the current estimates, fixed node eliminated.

    Parameters are ordered node by node (x, y, theta), skipping the fixed
    node, so the system has dimension ``3 * (len(graph) - 1)``.
    """
    return _assemble(EdgeArrays(graph), graph.estimates, graph.fixed_index)


def _updated(X: np.ndarray, delta: np.ndarray, fixed: int) -> np.ndarray:
    free = np.ones(len(X), dtype=bool)
    free[fixed] = False
    out = X.copy()
    out[free] += delta.reshape(-1, 3)
    out[free, 2] = wrap_angles(out[free, 2])
    return out


def apply_update(graph: PoseGraph, delta: np.ndarray) -> PoseGraph:
    """Add ``delta`` to every free node in place and renormalize headings.

    ``delta`` covers the free nodes only, so the fixed node has no slot.
    """
    delta = np.asarray(delta, dtype=float).ravel()
    if delta.size != 3 * (len(graph) - 1):
        raise ValueError(f"update has {delta.size} entries, graph has {3 * (len(graph) - 1)} free parameters")
    graph.estimates[:] = _updated(graph.estimates, delta, graph.fixed_index)
    return graph


def _solve_linear(A: sp.csc_matrix, rhs: np.ndarray) -> np.ndarray:
    try:
        lu = splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SolverError(f"normal equations are singular: {exc}") from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("normal-equation solve produced non-finite values")
    return x


def _damping(H: sp.csc_matrix) -> np.ndarray:
    diag = H.diagonal()
    floor = max(float(diag.max()) * 1e-9, 1e-12) if diag.size else 1e-12
    return np.maximum(diag, floor)


def solve(graph: PoseGraph, config: SolverConfig | None = None) -> SolveReport:
    """Minimize the total cost over all free node poses, updating ``graph``.

    Only cost-decreasing steps are accepted, so the accepted cost trace is
    non-increasing and the graph always holds the best estimate found. On a
    :class:`SolverError` the graph is left at the last accepted estimate.
    """
    config = config or SolverConfig()
    arrays = EdgeArrays(graph)
    fixed = graph.fixed_index
    X = graph.estimates.copy()
    cost = arrays.cost(X)
    report = SolveReport(initial_cost=cost, cost_trace=[cost])
    lm = config.algorithm == "levenberg_marquardt"
    lam = config.lm_lambda_init if lm else 0.0

    if len(graph) < 2 or cost == 0.0:
        report.final_cost = cost
        report.convergence_reason = "cost_tol"
        return report

    system = _assemble(arrays, X, fixed)
    reason: ConvergenceReason = "max_iter"
    for it in range(1, config.max_iterations + 1):
        if lm:
            A = system.H + sp.diags(lam * _damping(system.H), format="csc")
            try:
                delta = _solve_linear(A, -system.b)
            except SolverError:
                report.iterations.append(IterationRecord(it, lam, math.nan, math.nan, False))
                lam *= config.lm_lambda_up
                if lam > _LAMBDA_MAX:
                    graph.estimates[:] = X
                    report.final_cost = cost
                    raise SolverError(f"damped normal equations singular up to lambda={lam:.1e}")
                continue
            trial = _updated(X, delta, fixed)
            trial_cost = arrays.cost(trial)
        else:
            try:
                delta = _solve_linear(system.H, -system.b)
            except SolverError:
                graph.estimates[:] = X
                report.final_cost = cost
                raise
            # Step halving keeps plain Gauss-Newton monotone.
            for _ in range(_GN_HALVINGS):
                trial = _updated(X, delta, fixed)
                trial_cost = arrays.cost(trial)
                if trial_cost < cost:
                    break
                delta = 0.5 * delta
        step_norm = float(np.max(np.abs(delta))) if delta.size else 0.0
        accepted = trial_cost < cost
        report.iterations.append(IterationRecord(it, lam, trial_cost, step_norm, accepted))

        if accepted:
            rel = (cost - trial_cost) / cost
            X, cost = trial, trial_cost
            report.cost_trace.append(cost)
            graph.estimates[:] = X
            if cost == 0.0 or rel < config.cost_tolerance:
                reason = "cost_tol"
                break
            if step_norm < config.step_tolerance:
                reason = "step_tol"
                break
            if lm:
                lam = max(lam * config.lm_lambda_down, 1e-15)
            system = _assemble(arrays, X, fixed)
        else:
            if step_norm < config.step_tolerance:
                reason = "step_tol"
                break
            if not lm:
                reason = "stalled"
                break
            lam *= config.lm_lambda_up
            if lam > _LAMBDA_MAX:
                reason = "stalled"
                break

    graph.estimates[:] = X
    report.final_cost = cost
    report.convergence_reason = reason
    logger.info(
        "solve: %s after %d iterations, cost %.6g -> %.6g",
        reason, report.iterations_run, report.initial_cost, report.final_cost,
    )
    return report
