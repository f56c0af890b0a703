import math

import numpy as np
import pytest
from scipy.stats import norm

from mgsched.conic.program import ConicProgram, LinExpr
from mgsched.conic.solve import solve_socp
from mgsched.drcc import (
    AffineRandomExpr, AmbiguitySpec, RobustnessError, adjusted_epsilon,
    decompose_quadratic_cc, eta_star, kappa_level, reformulate_linear_cc,
    two_sided_cc, worst_case_expectation,
)


def _f_residual(eta, eps, theta):
    """Direct evaluation of the root function on the eta >= q branch."""
    eta = np.asarray(eta, dtype=float)
    q = norm.ppf(1.0 - eps)

    def anti(z):
        return -np.exp(-z) / math.sqrt(2.0 * math.pi)

    integral = anti(eta * eta / 2.0) - anti(q * q / 2.0)
    return eta * (norm.cdf(eta) - (1.0 - eps)) - integral - theta


def test_eta_star_against_grid_oracle():
    for eps in (0.01, 0.05, 0.1, 0.2):
        for theta in (1e-4, 1e-3, 0.01, 0.05):
            q = norm.ppf(1.0 - eps)
            grid = np.linspace(q, q + 6.0, 600001)
            vals = _f_residual(grid, eps, theta)
            oracle = float(grid[int(np.argmax(vals >= 0.0))])
            assert eta_star(eps, theta) == pytest.approx(oracle, abs=1e-5)


def test_theta_zero_is_exact_gaussian_quantile():
    for eps in (0.01, 0.025, 0.05, 0.1, 0.3):
        assert eta_star(eps, 0.0) == float(norm.ppf(1.0 - eps))
        assert kappa_level(eps, 0.0) == float(norm.ppf(1.0 - eps))
        assert adjusted_epsilon(eps, 0.0) == eps


def test_eta_star_monotonicity():
    e = [eta_star(0.05, th) for th in (0.0, 1e-3, 0.01, 0.05, 0.1)]
    assert all(a < b for a, b in zip(e, e[1:]))
    f = [eta_star(eps, 0.01) for eps in (0.01, 0.05, 0.1, 0.2)]
    assert all(a > b for a, b in zip(f, f[1:]))
    # adjusted level tightens but stays positive
    for th in (1e-3, 0.05):
        ea = adjusted_epsilon(0.05, th)
        assert 0.0 < ea < 0.05


def test_infeasible_radius_raises():
    with pytest.raises(RobustnessError):
        eta_star(0.05, 1e6)
    with pytest.raises(ValueError):
        eta_star(0.7, 0.01)
    with pytest.raises(ValueError):
        eta_star(0.05, -1.0)


def _amb(theta, sigma=None, mu=None, dim=2, T=1):
    if sigma is None:
        sigma = np.tile(np.eye(dim) * 0.04, (T, 1, 1))
    if mu is None:
        mu = np.zeros((T, dim))
    return AmbiguitySpec(mu=mu, sigma=sigma, theta=theta)


def test_reformulated_row_violation_rate_gaussian():
    # constant-a CC reduces to b >= kappa ||L'a|| + a'mu; at the binding
    # point the Gaussian violation rate equals the tightened level eps'
    rng = np.random.default_rng(2)
    eps, theta = 0.05, 0.01
    sigma = np.array([[[0.05, 0.01], [0.01, 0.03]]])
    mu = np.array([[0.1, -0.2]])
    amb = _amb(theta, sigma, mu)
    a = np.array([1.3, -0.7])
    b_min = amb.kappa(eps) * np.linalg.norm(amb.chol[0].T @ a) + a @ mu[0]

    xi = rng.multivariate_normal(mu[0], sigma[0], size=100_000)
    rate = float(np.mean(xi @ a > b_min))
    eps_adj = adjusted_epsilon(eps, theta)
    assert rate <= eps_adj + 0.005          # at most eps' up to MC noise
    assert rate >= eps_adj - 0.005          # and binding, not slack
    assert rate <= eps                       # satisfies the nominal level


def test_reformulate_constant_a_emits_linear_row():
    amb = _amb(0.02)
    p = ConicProgram()
    bvar = p.add_var("b", lb=-10, ub=10)
    expr = AffineRandomExpr((LinExpr.constant(1.0), LinExpr.constant(0.5)),
                            LinExpr.var(bvar), 0)
    n_lin_before, n_soc_before = len(p.lin), len(p.soc)
    reformulate_linear_cc(p, expr, 0.05, amb, tags=("t",))
    assert len(p.lin) == n_lin_before + 1
    assert len(p.soc) == n_soc_before
    # minimize b subject to the row: optimum is kappa*||L'a|| (mu = 0)
    p.objective = LinExpr.var(bvar)
    res = solve_socp(p)
    a = np.array([1.0, 0.5])
    ref = amb.kappa(0.05) * float(np.linalg.norm(amb.chol[0].T @ a))
    assert res.objective == pytest.approx(ref, abs=1e-7)


def test_reformulate_variable_a_emits_soc_row():
    amb = _amb(0.02)
    p = ConicProgram()
    u = p.add_var("u", lb=0.0, ub=2.0)
    bvar = p.add_var("b", lb=-10, ub=10)
    expr = AffineRandomExpr((LinExpr.var(u), LinExpr.constant(0.0)),
                            LinExpr.var(bvar), 0)
    reformulate_linear_cc(p, expr, 0.05, amb)
    assert len(p.soc) == 1
    # with u fixed at 2 the minimum b is kappa * sqrt(sigma) * 2
    p.add_lin(LinExpr.var(u), ">=", 2.0)
    p.objective = LinExpr.var(bvar)
    res = solve_socp(p)
    ref = amb.kappa(0.05) * 0.2 * 2.0
    assert res.objective == pytest.approx(ref, abs=1e-7)


def test_worst_case_expectation_dual_bound():
    # sup over the ball of E[c'xi] equals c'mu + theta ||L^{-1} c||; check
    # the epigraph encoding by minimizing the returned expression
    sigma = np.array([[[0.09, 0.02], [0.02, 0.04]]])
    mu = np.array([[0.3, 0.1]])
    amb = _amb(0.05, sigma, mu)
    p = ConicProgram()
    c = (LinExpr.constant(2.0), LinExpr.constant(-1.0))
    e = worst_case_expectation(p, c, 0, amb, "wc", tags=("22",))
    p.objective = e
    res = solve_socp(p)
    cv = np.array([2.0, -1.0])
    ref = cv @ mu[0] + 0.05 * float(
        np.linalg.norm(np.linalg.solve(amb.chol[0], cv)))
    assert res.objective == pytest.approx(ref, abs=1e-7)


def test_worst_case_expectation_theta_zero_no_aux():
    amb = _amb(0.0)
    p = ConicProgram()
    n0 = p.num_vars
    e = worst_case_expectation(p, (LinExpr.constant(1.0),
                                   LinExpr.constant(1.0)), 0, amb, "wc")
    assert p.num_vars == n0            # no auxiliary column
    assert len(p.soc) == 0
    assert e.is_constant()


def test_scale_equivariance():
    # scaling sigma by s^2 scales the SOC margin by s
    a = np.array([0.8, 1.1])
    base = _amb(0.01)
    m1 = base.kappa(0.05) * np.linalg.norm(base.chol[0].T @ a)
    scaled = _amb(0.01, sigma=np.tile(np.eye(2) * 0.04 * 9.0, (1, 1, 1)))
    m3 = scaled.kappa(0.05) * np.linalg.norm(scaled.chol[0].T @ a)
    assert m3 == pytest.approx(3.0 * m1, rel=1e-12)


def test_two_sided_cc_symmetric_margin():
    amb = _amb(0.0, sigma=np.array([[[0.04]]]), mu=np.array([[0.0]]), dim=1)
    p = ConicProgram()
    k = p.add_var("K", lb=0.0, ub=10.0)
    two_sided_cc(p, LinExpr.constant(0.3), (LinExpr.constant(1.0),), 0,
                 LinExpr.var(k), 0.05, amb)
    p.objective = LinExpr.var(k)
    res = solve_socp(p)
    # K >= |0.3| + q_{0.95} * 0.2
    ref = 0.3 + norm.ppf(0.95) * 0.2
    assert res.objective == pytest.approx(ref, abs=1e-7)


def test_quadratic_decomposition_bounds_magnitudes():
    amb = _amb(0.0, sigma=np.array([[[0.01]]]), mu=np.array([[0.0]]), dim=1)
    p = ConicProgram()
    cap = 1.0
    kp, kq = decompose_quadratic_cc(
        p, LinExpr.constant(0.4), (LinExpr.constant(1.0),),
        LinExpr.constant(0.2), (LinExpr.constant(0.5),),
        0, cap, 0.5, 0.1, amb, "line0")
    res = solve_socp(p)
    assert res.status == "optimal"
    x = res.x
    q = norm.ppf(1.0 - 0.05)   # per-side level nu*eps = 0.05
    assert x[kp] >= 0.4 + q * 0.1 - 1e-7
    assert x[kq] >= 0.2 + q * 0.05 - 1e-7
    assert math.hypot(x[kp], x[kq]) <= cap + 1e-7
    with pytest.raises(ValueError):
        decompose_quadratic_cc(
            p, LinExpr.constant(0.0), (LinExpr.constant(1.0),),
            LinExpr.constant(0.0), (LinExpr.constant(1.0),),
            0, cap, 1.5, 0.1, amb, "bad")


def test_ambiguity_spec_guards():
    with pytest.raises(ValueError):
        AmbiguitySpec(mu=np.zeros((1, 2)),
                      sigma=np.tile(-np.eye(2), (1, 1, 1)), theta=0.0)
    with pytest.raises(ValueError):
        AmbiguitySpec(mu=np.zeros((1, 2)),
                      sigma=np.tile(np.eye(2), (1, 1, 1)), theta=-0.1)
    amb = _amb(0.01)
    k1 = amb.kappa(0.05)
    assert amb.kappa(0.05) is k1 or amb.kappa(0.05) == k1  # cached
