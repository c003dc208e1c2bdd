import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from panokit.errors import NonFiniteResidual
from panokit.geometry import PinholeIntrinsics, pinhole_project
from panokit.optim import (
    LeastSquaresProblem,
    LmConfig,
    LmReport,
    levenberg_marquardt,
    numeric_jacobian,
)


def problem(fn, n, m, jac=None):
    return LeastSquaresProblem(residual=fn, n_params=n, n_residuals=m, jacobian=jac)


# ------------------------------------------------------------------ jacobian

def test_jacobian_of_square():
    p = problem(lambda x: np.array([x[0] ** 2]), 1, 1)
    J = numeric_jacobian(p, np.array([3.0]))
    assert abs(J[0, 0] - 6.0) < 1e-6


def test_jacobian_of_linear_map_is_exact():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(7, 4))
    b = rng.normal(size=7)
    p = problem(lambda x: A @ x - b, 4, 7)
    J = numeric_jacobian(p, rng.normal(size=4))
    assert np.max(np.abs(J - A)) < 1e-8


def test_jacobian_step_halving_consistency():
    # reprojection residual of a single pinhole point w.r.t. the point
    intr = PinholeIntrinsics(fx=400.0, fy=400.0, cx=320.0, cy=240.0,
                             distortion=(-0.1, 0.02, 0.0, 0.001, -0.001))
    target = pinhole_project((0.3, -0.2, 2.0), intr)

    def resid(x):
        return pinhole_project(x, intr) - target

    p = problem(resid, 3, 2)
    x = np.array([0.25, -0.1, 1.8])
    J1 = numeric_jacobian(p, x, rel_step=1e-6)
    J2 = numeric_jacobian(p, x, rel_step=5e-7)
    assert np.max(np.abs(J1 - J2)) < 1e-5


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_jacobian_raises_on_non_finite():
    p = problem(lambda x: np.array([np.sqrt(x[0])]), 1, 1)
    with pytest.raises(NonFiniteResidual):
        numeric_jacobian(p, np.array([0.0]))  # central step goes negative


# -------------------------------------------------------------------- solver

def test_linear_scalar():
    p = problem(lambda x: np.array([x[0] - 3.0]), 1, 1)
    rep = levenberg_marquardt(p, np.array([0.0]))
    assert abs(rep.x[0] - 3.0) < 1e-10
    assert rep.converged


def test_rosenbrock():
    def resid(x):
        return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])

    rep = levenberg_marquardt(problem(resid, 2, 2), np.array([-1.2, 1.0]))
    assert np.max(np.abs(rep.x - 1.0)) < 1e-6
    assert rep.iterations <= 100


def test_overdetermined_linear_matches_normal_equations():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(12, 5))
    b = rng.normal(size=12)
    rep = levenberg_marquardt(problem(lambda x: A @ x - b, 5, 12),
                              np.zeros(5))
    x_ne = np.linalg.solve(A.T @ A, A.T @ b)
    assert np.max(np.abs(rep.x - x_ne)) < 1e-8


def test_trace_strictly_decreases():
    def resid(x):
        return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])

    rep = levenberg_marquardt(problem(resid, 2, 2), np.array([-1.2, 1.0]))
    t = np.array(rep.cost_trace)
    assert np.all(np.diff(t) < 0)


def test_gradient_tolerance_holds_at_termination():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(9, 3))
    b = rng.normal(size=9)
    p = problem(lambda x: A @ x - b, 3, 9)
    rep = levenberg_marquardt(p, np.zeros(3))
    if rep.termination == "gradient_tolerance":
        J = numeric_jacobian(p, rep.x)
        g = J.T @ p.residual(rep.x)
        assert np.max(np.abs(g)) <= 1e-10


def test_deterministic_traces():
    def resid(x):
        return np.array([x[0] ** 2 - 2.0, np.sin(x[1]) - 0.4, x[0] * x[1] - 1.0])

    a = levenberg_marquardt(problem(resid, 2, 3), np.array([1.0, 0.1]))
    b = levenberg_marquardt(problem(resid, 2, 3), np.array([1.0, 0.1]))
    assert a.cost_trace == b.cost_trace
    assert np.array_equal(a.x, b.x)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_at_start_raises():
    p = problem(lambda x: np.array([np.log(x[0])]), 1, 1)
    with pytest.raises(NonFiniteResidual):
        levenberg_marquardt(p, np.array([-1.0]))


def test_report_serializes():
    p = problem(lambda x: np.array([x[0] - 1.0]), 1, 1)
    rep = levenberg_marquardt(p, np.array([0.0]))
    d = rep.to_json_dict()
    assert set(d) == {"x", "cost", "iterations", "termination", "cost_trace"}
    assert isinstance(d["x"], list)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_fuzzed_nonlinear_problems_have_monotone_traces(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    m = n + int(rng.integers(0, 4))
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    c = rng.uniform(0.0, 0.5, size=n)

    def resid(x):
        return A @ (x + c * np.sin(x)) - b

    rep = levenberg_marquardt(problem(resid, n, m),
                              rng.normal(size=n) * 0.5)
    t = np.array(rep.cost_trace)
    assert np.all(np.diff(t) < 0)
    assert np.all(np.isfinite(rep.x))
