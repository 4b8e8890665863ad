import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.fft import dct
from scipy.optimize import linprog

from encrust.l1solver import BasisPursuitProblem, SolverConfig, dct_basis, solve_basis_pursuit


def _lp_basis_pursuit(C, b):
    """Independent route: min 1'(u+v) s.t. C(u-v)=b, u,v >= 0."""
    p, q = C.shape
    res = linprog(np.ones(2 * q), A_eq=np.hstack([C, -C]), b_eq=b, bounds=(0, None), method="highs")
    assert res.status == 0
    return res.x[:q] - res.x[q:]


def _sparse_problem(seed, p=40, q=100, k=6, scale=1.0):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((p, q))
    v = np.zeros(q)
    v[rng.choice(q, k, replace=False)] = scale * rng.standard_normal(k)
    return C, v, C @ v


@pytest.mark.parametrize("n", [1, 8, 64, 256])
def test_dct_basis_matches_scipy(n):
    psi = dct_basis(n)
    assert np.allclose(psi.T @ psi, np.eye(n), atol=1e-12)
    x = np.random.default_rng(n).standard_normal(n)
    assert np.allclose(psi.T @ x, dct(x, type=2, norm="ortho"), atol=1e-10)


def test_dct_basis_rejects_empty():
    with pytest.raises(ValueError):
        dct_basis(0)


@pytest.mark.parametrize("seed", range(5))
def test_exact_recovery_matches_linprog(seed):
    C, v, b = _sparse_problem(seed)
    res = solve_basis_pursuit(BasisPursuitProblem(C, b))
    lp = _lp_basis_pursuit(C, b)
    assert res.converged
    assert np.allclose(res.solution, v, atol=1e-6)
    assert np.allclose(res.solution, lp, atol=1e-6)


@given(st.integers(0, 10**6), st.sampled_from([1e-4, 1.0, 1e5]))
@settings(max_examples=15, deadline=None)
def test_l1_objective_agrees_with_linprog(seed, scale):
    # denser signals: recovery may fail, but the l1 optimum must agree
    C, _, b = _sparse_problem(seed, p=20, q=50, k=12, scale=scale)
    res = solve_basis_pursuit(BasisPursuitProblem(C, b))
    lp = _lp_basis_pursuit(C, b)
    assert np.linalg.norm(C @ res.solution - b) <= 1e-6 * np.linalg.norm(b)
    assert np.abs(res.solution).sum() <= np.abs(lp).sum() * (1 + 1e-5)


def test_denoised_respects_ball():
    C, v, b = _sparse_problem(3)
    rng = np.random.default_rng(9)
    noise = 0.01 * rng.standard_normal(b.size)
    eps = 1.05 * np.linalg.norm(noise)
    prob = BasisPursuitProblem(C, b + noise, mode="denoised", epsilon=eps)
    res = solve_basis_pursuit(prob)
    raw = solve_basis_pursuit(prob, SolverConfig(polish=False))
    assert np.linalg.norm(C @ res.solution - b - noise) <= eps * (1 + 1e-9)
    # the polished point is a support refit: feasible, within 1% of the l1
    # optimum and closer to the truth than the shrunken ADMM iterate
    assert np.abs(res.solution).sum() <= np.abs(v).sum() * 1.01
    assert np.linalg.norm(res.solution - v) < np.linalg.norm(raw.solution - v)
    assert np.linalg.norm(res.solution - v) < 0.1 * np.linalg.norm(v)


def test_denoised_zero_when_ball_contains_origin():
    C, _, b = _sparse_problem(4)
    res = solve_basis_pursuit(BasisPursuitProblem(C, b, mode="denoised",
                                                  epsilon=2 * np.linalg.norm(b)))
    assert np.abs(res.solution).max() < 1e-6 * np.abs(b).max()


def test_zero_rhs_short_circuits():
    C, _, _ = _sparse_problem(0)
    res = solve_basis_pursuit(BasisPursuitProblem(C, np.zeros(C.shape[0])))
    assert res.converged and res.iterations == 0 and not res.solution.any()


def test_iteration_cap_reports_not_converged():
    C, _, b = _sparse_problem(1, p=30, q=120, k=20)
    res = solve_basis_pursuit(BasisPursuitProblem(C, b), SolverConfig(max_iters=1, polish=False))
    assert not res.converged and res.iterations == 1


def test_scale_equivariance():
    C, v, b = _sparse_problem(2)
    a = solve_basis_pursuit(BasisPursuitProblem(C, b)).solution
    s = solve_basis_pursuit(BasisPursuitProblem(C, 1e6 * b)).solution
    assert np.allclose(s, 1e6 * a, rtol=1e-6, atol=1e-3)


def test_dct_domain_recovery():
    n, m = 128, 48
    psi = dct_basis(n)
    rng = np.random.default_rng(5)
    theta = np.zeros(n)
    theta[rng.choice(n, 5, replace=False)] = rng.standard_normal(5)
    phi = rng.standard_normal((m, n))
    res = solve_basis_pursuit(BasisPursuitProblem(phi @ psi, phi @ psi @ theta))
    assert np.allclose(psi @ res.solution, psi @ theta, atol=1e-6)


@pytest.mark.parametrize("kw", [
    {"mode": "lasso"},
    {"mode": "denoised", "epsilon": -1.0},
    {"mode": "denoised", "epsilon": float("nan")},
])
def test_problem_validation(kw):
    with pytest.raises(ValueError):
        BasisPursuitProblem(np.eye(3), np.ones(3), **kw)


def test_problem_rejects_mismatch_and_nonfinite():
    with pytest.raises(ValueError):
        BasisPursuitProblem(np.eye(3), np.ones(4))
    with pytest.raises(ValueError):
        BasisPursuitProblem(np.eye(3), np.array([1.0, np.inf, 0.0]))


@pytest.mark.parametrize("kw", [{"max_iters": 0}, {"tol_primal": 0}, {"rho": -1}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)
