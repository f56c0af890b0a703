"""Distributionally robust chance-constraint machinery.

Ambiguity set: a Wasserstein ball of radius theta (Mahalanobis transport
norm) around an elliptical reference distribution with per-period mean
mu_t and covariance Sigma_t.  Single-sided linear chance constraints
P(a(x)'xi <= b(x)) >= 1-eps over this set reduce to classic SOC rows

    kappa * || L_t' a(x) || <= b(x) - a(x)' mu_t,   Sigma_t = L_t L_t',

with kappa = eta*(eps, theta), the root of

    F(eta) = eta (Phi(eta) - (1-eps)) - int_{q^2/2}^{eta^2/2} k g(z) dz - theta

on the branch eta >= q = Phi^{-1}(1-eps); equivalently kappa =
Phi^{-1}(1-eps') with the tightened level eps' = 1 - Phi(eta*).  theta = 0
gives back the plain Gaussian reformulation with kappa = q bit-for-bit.

Worst-case expectations of linear random costs follow the dual bound
E[c(x)'xi] <= c(x)'mu_t + theta * ||c(x)||_{Sigma_t^{-1}}, encoded as an
epigraph auxiliary over || L_t^{-1} c(x) ||.

Quadratic (apparent-power) chance constraints are decomposed into
per-component two-sided linear CCs bounded by auxiliary magnitudes plus a
deterministic SOC row on those magnitudes; the frequency-nadir material
couples a two-sided CC with a rotated cone that relaxes the defining
quadratic equality without loss of optimality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .conic.program import ConicProgram, LinExpr

__all__ = [
    "AmbiguitySpec", "AffineRandomExpr", "RobustnessError",
    "DENSITY_GENERATORS", "eta_star", "adjusted_epsilon", "kappa_level",
    "reformulate_linear_cc", "worst_case_expectation", "split_two_sided",
    "two_sided_cc", "decompose_quadratic_cc", "nadir_cc_material",
]


class RobustnessError(ValueError):
    """Requested (eps, theta) admits no finite tightened level."""


# density generators: name -> antiderivative of k*g(z) with the univariate
# normalization k (so that the Gaussian case reproduces phi exactly).
def _gauss_kg_antideriv(z):
    return -math.exp(-z) / math.sqrt(2.0 * math.pi)


DENSITY_GENERATORS = {"gaussian": _gauss_kg_antideriv}

_ETA_CAP = 50.0


def _check_eps(eps):
    if not 0.0 < eps < 0.5:
        raise ValueError(f"violation level eps={eps} outside (0, 0.5)")


def eta_star(eps: float, theta: float, generator: str = "gaussian") -> float:
    """Tightening root eta*; equals Phi^{-1}(1-eps) exactly at theta=0."""
    _check_eps(eps)
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    q = norm.ppf(1.0 - eps)
    if theta == 0.0:
        return float(q)
    anti = DENSITY_GENERATORS[generator]

    def f(eta):
        integral = anti(eta * eta / 2.0) - anti(q * q / 2.0)
        return eta * (norm.cdf(eta) - (1.0 - eps)) - integral - theta

    lo, hi = q, q + 0.5
    while f(hi) < 0.0:
        lo, hi = hi, min(2.0 * hi, _ETA_CAP)
        if lo >= _ETA_CAP:
            raise RobustnessError(
                f"no eta* below {_ETA_CAP} for eps={eps}, theta={theta}: "
                "robustness level infeasible")
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def adjusted_epsilon(eps, theta, generator="gaussian"):
    """Tightened violation level eps' = 1 - Phi(eta*); eps' <= eps."""
    if theta == 0.0:
        _check_eps(eps)
        return float(eps)
    return float(1.0 - norm.cdf(eta_star(eps, theta, generator)))


def kappa_level(eps, theta, generator="gaussian"):
    """SOC scaling Phi^{-1}(1-eps'), which is eta* itself."""
    return eta_star(eps, theta, generator)


@dataclass
class AmbiguitySpec:
    """Per-period (mu_t, Sigma_t) with a shared radius and level table."""
    mu: np.ndarray            # T x S
    sigma: np.ndarray         # T x S x S, positive definite
    theta: float
    generator: str = "gaussian"
    eps_g: float = 0.05
    eps_b: float = 0.05
    eps_s: float = 0.05
    eps_l: float = 0.05
    eps_v: float = 0.05
    eps_e: float = 0.05
    eps_f: float = 0.05
    nu_l: float = 0.5
    nu_e: float = 0.5
    chol: np.ndarray = field(init=False)   # T x S x S lower factors
    _kappa: dict = field(init=False, default_factory=dict)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        try:
            self.chol = np.linalg.cholesky(self.sigma)
        except np.linalg.LinAlgError:
            raise ValueError("covariance not positive definite") from None

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    def kappa(self, eps: float) -> float:
        key = float(eps)
        if key not in self._kappa:
            self._kappa[key] = kappa_level(eps, self.theta, self.generator)
        return self._kappa[key]


@dataclass
class AffineRandomExpr:
    """Random-affine constraint material a(x)'xi <= b(x) at period t."""
    a: tuple          # tuple[LinExpr], length = spec.dim
    b: LinExpr
    t: int


def _mean_shifted_rhs(expr: AffineRandomExpr, amb: AmbiguitySpec) -> LinExpr:
    rhs = expr.b
    for i, ai in enumerate(expr.a):
        m = amb.mu[expr.t, i]
        if m != 0.0:
            rhs = rhs - ai * m
    return rhs


def reformulate_linear_cc(prog: ConicProgram, expr: AffineRandomExpr,
                          eps: float, amb: AmbiguitySpec, tags=()) -> int:
    """Emit P(a'xi <= b) >= 1-eps as an SOC (or degenerate linear) row."""
    k = amb.kappa(eps)
    L = amb.chol[expr.t]
    rhs = _mean_shifted_rhs(expr, amb)
    if all(ai.is_constant() for ai in expr.a):
        a = np.array([ai.const for ai in expr.a])
        nrm = float(np.linalg.norm(L.T @ a))
        # b(x) - a'mu >= kappa * ||L'a||  as a plain linear row
        return prog.add_lin(rhs, ">=", k * nrm, tags=tags)
    terms = []
    for j in range(amb.dim):
        tj = LinExpr.constant(0.0)
        for i, ai in enumerate(expr.a):
            if L[i, j] != 0.0:
                tj = tj + ai * (k * L[i, j])
        terms.append(tj)
    return prog.add_soc(terms, rhs, tags=tags)


def worst_case_expectation(prog: ConicProgram, c, t: int,
                           amb: AmbiguitySpec, name: str, tags=()) -> LinExpr:
    """Objective material for sup E[c(x)'xi]: c'mu_t + theta*||c||_{Sigma^-1}.

    Returns an affine expression to fold into the objective; at theta=0 no
    auxiliary variable or cone is created so the build is coefficient-
    identical to the plain-expectation model.
    """
    mean = LinExpr.constant(0.0)
    for i, ci in enumerate(c):
        m = amb.mu[t, i]
        if m != 0.0:
            mean = mean + ci * m
    if amb.theta == 0.0 or all(ci.is_constant() and ci.const == 0.0
                               for ci in c):
        return mean
    L = amb.chol[t]
    # forward substitution y = L^{-1} c(x), each y_j affine in x
    y = []
    for j in range(amb.dim):
        e = c[j]
        for kk in range(j):
            if L[j, kk] != 0.0:
                e = e - y[kk] * L[j, kk]
        y.append(e * (1.0 / L[j, j]))
    aux = prog.add_var(name, "c", lb=0.0)
    prog.add_soc(y, LinExpr.var(aux), tags=tags)
    return mean + LinExpr.var(aux) * amb.theta


def split_two_sided(expr: AffineRandomExpr):
    """|a'xi + (-b)| <= ... convention: returns the (<=, >=) side pair.

    Two-sided |s(x) + a'xi| <= K becomes the single-sided exprs
    a'xi <= K - s(x) and (-a)'xi <= K + s(x), each kept at the caller's
    per-side level.
    """
    neg = AffineRandomExpr(tuple(ai * -1.0 for ai in expr.a), expr.b, expr.t)
    return expr, neg


def two_sided_cc(prog, det: LinExpr, a, t, bound: LinExpr, eps, amb,
                 tags=()) -> tuple[int, int]:
    """P(|det(x) + a(x)'xi| <= bound(x)) via two single-sided CCs at eps."""
    up = AffineRandomExpr(tuple(a), bound - det, t)
    lo = AffineRandomExpr(tuple(ai * -1.0 for ai in a), bound + det, t)
    return (reformulate_linear_cc(prog, up, eps, amb, tags=tags),
            reformulate_linear_cc(prog, lo, eps, amb, tags=tags))


def decompose_quadratic_cc(prog, det_p: LinExpr, a_p, det_q: LinExpr, a_q,
                           t: int, cap: float, nu: float, eps: float,
                           amb: AmbiguitySpec, name: str, tags_cc=(),
                           tags_soc=()) -> tuple[int, int]:
    """P(f_p^2 + f_q^2 <= cap^2) >= 1-eps via per-component magnitudes.

    Introduces K_p, K_q >= 0; |f_p| <= K_p at level nu*eps, |f_q| <= K_q at
    (1-nu)*eps, plus the deterministic cone ||(K_p, K_q)|| <= cap.
    Returns the (K_p, K_q) column indices.
    """
    if not 0.0 < nu < 1.0:
        raise ValueError("split weight nu must be in (0, 1)")
    kp = prog.add_var(f"{name}.Kp", "c", lb=0.0)
    kq = prog.add_var(f"{name}.Kq", "c", lb=0.0)
    two_sided_cc(prog, det_p, a_p, t, LinExpr.var(kp), nu * eps, amb,
                 tags=tags_cc)
    two_sided_cc(prog, det_q, a_q, t, LinExpr.var(kq), (1.0 - nu) * eps, amb,
                 tags=tags_cc)
    prog.add_soc([LinExpr.var(kp), LinExpr.var(kq)], LinExpr.constant(cap),
                 tags=tags_soc)
    return kp, kq


def nadir_cc_material(prog, det: LinExpr, a, t: int, z: int, x: int, y: int,
                      w: int, eps_f: float, amb: AmbiguitySpec,
                      tags_cc=(), tags_cone=()) -> None:
    """Frequency-nadir coupling: P(|p_imb - z| <= w) >= 1-eps_f plus the
    rotated cone w^2 <= x*y (the quadratic equality relaxed without loss of
    optimality) and w >= 0 (enforced via the variable bound on w).
    """
    _check_eps(eps_f)
    two_sided_cc(prog, det - LinExpr.var(z), a, t, LinExpr.var(w), eps_f,
                 amb, tags=tags_cc)
    prog.add_rsoc(LinExpr.var(x) * 0.5, LinExpr.var(y), [LinExpr.var(w)],
                  tags=tags_cone)
