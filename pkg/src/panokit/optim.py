"""Dense Levenberg-Marquardt with numeric Jacobians.

Small and deterministic on purpose: problems here stay under a few
hundred parameters, so dense linear algebra is fine and identical
inputs must yield bit-identical iterate traces.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvariantViolation, NonFiniteResidual

log = logging.getLogger(__name__)

_SINGULAR_RETRY_CAP = 8
_REJECT_CAP = 60


@dataclass(frozen=True)
class LeastSquaresProblem:
    residual: Callable[[np.ndarray], np.ndarray]
    n_params: int
    n_residuals: int
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.n_params <= 0 or self.n_residuals <= 0:
            raise InvariantViolation("parameter and residual counts must be positive")
        if self.n_residuals < self.n_params:
            log.warning("under-determined problem: %d residuals < %d parameters",
                        self.n_residuals, self.n_params)


@dataclass(frozen=True)
class LmConfig:
    max_iterations: int = 100
    damping_init: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    gradient_tolerance: float = 1e-10
    step_tolerance: float = 1e-12
    rel_step: float = 1e-6

    def __post_init__(self):
        for name in ("max_iterations", "damping_init", "damping_up",
                     "damping_down", "gradient_tolerance", "step_tolerance",
                     "rel_step"):
            if not getattr(self, name) > 0:
                raise InvariantViolation(f"LmConfig.{name} must be positive")


@dataclass(frozen=True)
class LmReport:
    x: np.ndarray
    cost: float
    iterations: int
    termination: str
    cost_trace: tuple[float, ...]

    @property
    def converged(self) -> bool:
        return self.termination in ("gradient_tolerance", "step_tolerance")

    def to_json_dict(self) -> dict:
        return {
            "x": np.asarray(self.x).tolist(),
            "cost": float(self.cost),
            "iterations": int(self.iterations),
            "termination": self.termination,
            "cost_trace": [float(c) for c in self.cost_trace],
        }


def _eval_residual(problem: LeastSquaresProblem, x: np.ndarray,
                   where: str) -> np.ndarray:
    r = np.asarray(problem.residual(x), dtype=float).ravel()
    if r.shape != (problem.n_residuals,):
        raise InvariantViolation(
            f"residual returned shape {r.shape}, expected ({problem.n_residuals},)")
    if not np.all(np.isfinite(r)):
        raise NonFiniteResidual(f"non-finite residual at {where}")
    return r


def numeric_jacobian(problem: LeastSquaresProblem, x: np.ndarray,
                     rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with per-coordinate step max(rel_step*|x_i|, rel_step)."""
    x = np.asarray(x, dtype=float)
    J = np.empty((problem.n_residuals, problem.n_params))
    for i in range(problem.n_params):
        h = max(rel_step * abs(x[i]), rel_step)
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        rp = _eval_residual(problem, xp, f"jacobian column {i} (+)")
        rm = _eval_residual(problem, xm, f"jacobian column {i} (-)")
        J[:, i] = (rp - rm) / (2.0 * h)
    return J


def _jacobian(problem: LeastSquaresProblem, x: np.ndarray,
              config: LmConfig) -> np.ndarray:
    if problem.jacobian is not None:
        J = np.asarray(problem.jacobian(x), dtype=float)
        if not np.all(np.isfinite(J)):
            raise NonFiniteResidual("non-finite analytic Jacobian")
        return J
    return numeric_jacobian(problem, x, config.rel_step)


def levenberg_marquardt(problem: LeastSquaresProblem, x0,
                        config: LmConfig = LmConfig()) -> LmReport:
    """Minimize 0.5*||r(x)||^2 with scaled-diagonal damping.

    The normal equations are (J^T J + lambda * diag(J^T J)) delta = -J^T r;
    lambda shrinks by config.damping_down on accepted steps and grows by
    config.damping_up on rejections. Non-finite residuals at a trial point
    count as a rejection; non-finite residuals at x0 or inside the Jacobian
    raise NonFiniteResidual. The cost trace holds the initial cost followed
    by one entry per accepted step and is strictly decreasing.
    """
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (problem.n_params,):
        raise InvariantViolation(
            f"x0 has shape {x.shape}, expected ({problem.n_params},)")
    r = _eval_residual(problem, x, "x0")
    cost = 0.5 * float(r @ r)
    trace = [cost]
    lam = config.damping_init
    iterations = 0
    termination = "max_iterations"

    for _ in range(config.max_iterations):
        iterations += 1
        J = _jacobian(problem, x, config)
        g = J.T @ r
        if np.max(np.abs(g)) <= config.gradient_tolerance:
            termination = "gradient_tolerance"
            break
        JtJ = J.T @ J
        d = np.diag(JtJ).copy()
        # guard against exactly-zero columns, which would make damping a no-op
        d[d == 0.0] = 1.0

        accepted = False
        singular_retries = 0
        rejects = 0
        while not accepted:
            A = JtJ + lam * np.diag(d)
            try:
                delta = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is None or not np.all(np.isfinite(delta)):
                singular_retries += 1
                if singular_retries > _SINGULAR_RETRY_CAP:
                    termination = "singular_normal_equations"
                    break
                lam *= config.damping_up
                continue
            step_small = np.linalg.norm(delta) <= config.step_tolerance * (
                config.step_tolerance + np.linalg.norm(x))
            x_try = x + delta
            try:
                r_try = _eval_residual(problem, x_try, "trial point")
            except NonFiniteResidual:
                r_try = None
            if r_try is not None:
                cost_try = 0.5 * float(r_try @ r_try)
                if cost_try < cost:
                    x, r, cost = x_try, r_try, cost_try
                    trace.append(cost)
                    lam *= config.damping_down
                    accepted = True
                    continue
            if step_small:
                # damping has shrunk the step below resolution; no progress possible
                termination = "step_tolerance"
                break
            rejects += 1
            if rejects > _REJECT_CAP:
                termination = "stalled"
                break
            lam *= config.damping_up
        if not accepted:
            break
        step_norm = float(np.linalg.norm(delta))
        if step_norm <= config.step_tolerance * (config.step_tolerance
                                                 + float(np.linalg.norm(x))):
            termination = "step_tolerance"
            break

    return LmReport(x=x, cost=cost, iterations=iterations,
                    termination=termination, cost_trace=tuple(trace))
