"""Numerical convergence certificates and closed-form comparison bounds.

This module embodies the analysis side of the method: the rank-one
Lyapunov matrix certifying per-step contraction of a potential function,
the 3x3 linear-matrix-inequality residual whose positive semidefiniteness
validates a claimed rate, the exact asymptotic rate of the momentum
iteration on quadratics, and every closed-form suboptimality bound used
as a comparison curve by the benchmark harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    GradientOracle,
    IterateState,
    ParameterError,
    StrongConvexityProfile,
    critical_momentum,
    suboptimality,
)
from .linalg import det3, jacobi_eigvalsh, trace_norm_sym

_LD = np.longdouble


@dataclass(frozen=True)
class LyapunovCertificate:
    """2x2 potential matrix with its per-step contraction factor.

    The certified recursion is
        E[V(next)] <= rate_factor * E[V(current)] + variance_coeff * sigma^2
    where V(state) = (xi - xi*)' (p_tilde kron I) (xi - xi*) + f(x) - f*.
    """

    p_tilde: np.ndarray
    rate_factor: float
    variance_coeff: float
    alpha: float
    beta: float
    profile: StrongConvexityProfile
    eta2: float = 0.0


def lyapunov_certificate(alpha: float, profile: StrongConvexityProfile) -> LyapunovCertificate:
    """Rank-one potential matrix for the critical-momentum iteration.

    p_tilde = v v' with v = [sqrt(1/(2 alpha)), sqrt(mu/2) - sqrt(1/(2 alpha))],
    contraction factor 1 - sqrt(alpha mu), and additive noise coefficient
    alpha/2 (1 + alpha L) per unit variance.
    """
    profile.require_strongly_convex()
    if not (0 < alpha <= (1.0 + 1e-12) / profile.L):
        raise ParameterError(f"need 0 < alpha <= 1/L, got {alpha}")
    v = np.array([math.sqrt(1.0 / (2.0 * alpha)), math.sqrt(profile.mu / 2.0) - math.sqrt(1.0 / (2.0 * alpha))])
    rate = 1.0 - math.sqrt(alpha * profile.mu)
    coeff = 0.5 * alpha * (1.0 + alpha * profile.L)
    return LyapunovCertificate(np.outer(v, v), rate, coeff, alpha, critical_momentum(alpha, profile.mu), profile)


def step_size_cap(profile: StrongConvexityProfile, eta2: float) -> float:
    """Largest stepsize admitted under state-dependent gradient noise.

    min(1/L, mu^3 / (60 eta2)^2) when eta2 > 0, else 1/L.
    """
    profile.require_strongly_convex()
    if eta2 < 0:
        raise ParameterError("eta2 must be nonnegative")
    if eta2 == 0:
        return 1.0 / profile.L
    return min(1.0 / profile.L, profile.mu**3 / (60.0 * eta2) ** 2)


def general_noise_certificate(
    alpha: float, profile: StrongConvexityProfile, eta2: float
) -> LyapunovCertificate:
    """Potential matrix for the state-dependent noise model.

    q_tilde = p_tilde + 2 alpha eta2 c' c with c the query-point row of the
    system matrices; the certified factor is 1 - sqrt(alpha mu)/3 with
    additive coefficient 2 alpha per unit variance. Requires kappa >= 4 and
    alpha below the state-noise stepsize cap.
    """
    profile.require_strongly_convex()
    if profile.kappa < 4:
        raise ParameterError(f"state-dependent noise analysis needs kappa >= 4, got {profile.kappa}")
    cap = step_size_cap(profile, eta2)
    if not (0 < alpha <= cap * (1.0 + 1e-12)):
        raise ParameterError(f"need 0 < alpha <= {cap}, got {alpha}")
    base = lyapunov_certificate(alpha, profile)
    beta = base.beta
    c = np.array([1.0 + beta, -beta])
    q = base.p_tilde + 2.0 * alpha * eta2 * np.outer(c, c)
    rate = 1.0 - math.sqrt(alpha * profile.mu) / 3.0
    return LyapunovCertificate(q, rate, 2.0 * alpha, alpha, beta, profile, eta2)


def lyapunov_value(cert: LyapunovCertificate, state: IterateState, oracle: GradientOracle) -> float:
    """Evaluate the potential blockwise, never forming a 2d x 2d matrix.

    (xi - xi*)' (P kron I) (xi - xi*) = sum_ij P_ij (x_i - x*)'(x_j - x*),
    plus the objective gap at the current iterate.
    """
    if state.dimension != oracle.dimension:
        raise ParameterError("state dimension does not match oracle")
    p = cert.p_tilde
    e1 = state.x_curr - oracle.x_opt
    e2 = state.x_prev - oracle.x_opt
    quad = float(p[0, 0] * (e1 @ e1) + 2.0 * p[0, 1] * (e1 @ e2) + p[1, 1] * (e2 @ e2))
    return quad + suboptimality(oracle, state.x_curr)


def _x1_x2(alpha: float, beta: float, mu: float, L: float):
    x1 = 0.5 * np.array(
        [
            [beta**2 * mu, -(beta**2) * mu, -beta],
            [-(beta**2) * mu, beta**2 * mu, beta],
            [-beta, beta, alpha * (2.0 - L * alpha)],
        ]
    )
    x2 = 0.5 * np.array(
        [
            [(1.0 + beta) ** 2 * mu, -beta * (1.0 + beta) * mu, -(1.0 + beta)],
            [-beta * (1.0 + beta) * mu, beta**2 * mu, beta],
            [-(1.0 + beta), beta, alpha * (2.0 - L * alpha)],
        ]
    )
    return x1, x2


@dataclass(frozen=True)
class LmiResidual:
    """3x3 residual whose positive semidefiniteness certifies a rate.

    `scale` is the trace norm floored at the rounding noise of the
    assembly; a residual that is exactly the zero matrix in the reals
    (the kappa = 1, alpha = 1/L corner) otherwise has a trace norm made
    purely of rounding error, and a relative test against it would reject
    noise-level negative eigenvalues.
    """

    gamma: np.ndarray
    min_eigenvalue: float
    trace_norm: float
    scale: float
    alpha: float
    beta: float
    rho2: float
    p_tilde: np.ndarray
    profile: StrongConvexityProfile

    def is_psd(self, tol: float = 1e-9) -> bool:
        return self.min_eigenvalue >= -tol * self.scale


def lmi_residual(
    alpha: float,
    beta: float,
    rho2: float,
    p_tilde: np.ndarray,
    profile: StrongConvexityProfile,
) -> LmiResidual:
    """Assemble rho2 X1 + (1 - rho2) X2 minus the quadratic system block.

    The quadratic block is [[A'PA - rho2 P, A'PB], [B'PA, B'PB]] built from
    the 2x2 Kronecker factors at (alpha, beta). For the rank-one potential
    at the critical momentum and rho2 = 1 - sqrt(alpha mu) the residual is
    positive semidefinite (and exactly singular).
    """
    mu, L = profile.mu, profile.L
    a = np.array([[1.0 + beta, -beta], [1.0, 0.0]])
    b = np.array([[-alpha], [0.0]])
    x1, x2 = _x1_x2(alpha, beta, mu, L)
    block = np.zeros((3, 3))
    block[:2, :2] = a.T @ p_tilde @ a - rho2 * p_tilde
    block[:2, 2:] = a.T @ p_tilde @ b
    block[2:, :2] = block[:2, 2:].T
    block[2, 2] = float(b.T @ p_tilde @ b)
    gamma = rho2 * x1 + (1.0 - rho2) * x2 - block
    gamma = 0.5 * (gamma + gamma.T)
    ev = jacobi_eigvalsh(gamma)
    tn = float(np.sum(np.abs(ev)))
    # rounding-noise floor of the assembly, from the operand magnitudes
    assembly = trace_norm_sym(rho2 * x1 + (1.0 - rho2) * x2) + trace_norm_sym(block)
    floor = 64.0 * np.finfo(float).eps * max(assembly, 1e-300)
    return LmiResidual(
        gamma,
        float(ev[0]),
        tn,
        max(tn, floor),
        alpha,
        beta,
        rho2,
        np.array(p_tilde),
        profile,
    )


def certificate_residual(alpha: float, profile: StrongConvexityProfile) -> LmiResidual:
    """Residual for the certified inputs at a given stepsize."""
    cert = lyapunov_certificate(alpha, profile)
    return lmi_residual(alpha, cert.beta, cert.rate_factor, cert.p_tilde, profile)


def residual_identities(res: LmiResidual) -> dict:
    """Deviations of the residual from its closed-form structure.

    Returns absolute deviations of the (3,3) entry from alpha (1 - L alpha)/2,
    of the (2,3) entry from zero, and of the determinant from zero, for
    relative comparison against the residual scale.
    """
    g = res.gamma
    alpha, L = res.alpha, res.profile.L
    return {
        "entry_33": abs(float(g[2, 2]) - alpha * (1.0 - L * alpha) / 2.0),
        "entry_23": abs(float(g[1, 2])),
        "det": abs(det3(g)),
    }


def asymptotic_rate(alpha: float, beta: float, profile: StrongConvexityProfile) -> float:
    """Worst asymptotic contraction factor of the iteration on quadratics.

    Evaluates, at both curvature extremes lambda in {mu, L}, the spectral
    radius of the per-mode 2x2 iteration matrix: with u = 1 - alpha lambda
    and discriminant D = u ((1+beta)^2 u - 4 beta),
        rho = |(1+beta) u| / 2 + sqrt(D) / 2   when D >= 0,
        rho = sqrt(beta u)                      otherwise,
    and returns the larger of the two. Near the critical momentum the
    discriminant vanishes and a double root appears; the evaluation runs
    in extended precision because the square root turns rounding noise of
    size eps into errors of size sqrt(eps).
    """
    profile.require_strongly_convex()
    if not (0 < alpha <= (1.0 + 1e-12) / profile.L):
        raise ParameterError(f"need 0 < alpha <= 1/L, got {alpha}")
    if beta < 0:
        raise ParameterError("beta must be nonnegative")
    al, be = _LD(alpha), _LD(beta)
    out = _LD(0)
    for lam in (profile.mu, profile.L):
        u = _LD(1) - al * _LD(lam)
        t = (_LD(1) + be) ** 2 * u - _LD(4) * be
        if t >= 0:
            r = abs((_LD(1) + be) * u) / _LD(2) + np.sqrt(u * t) / _LD(2)
        else:
            r = np.sqrt(be * u)
        out = max(out, r)
    return float(out)


def fit_empirical_rate(suboptimality_trace: np.ndarray) -> float:
    """Per-step contraction factor fitted on the last half of a noiseless run.

    The gap decays like C rho^(2n); a least-squares slope of log(gap)/2
    over the trailing half (positive entries only) estimates log(rho).
    """
    vals = np.asarray(suboptimality_trace, dtype=float)
    n = len(vals)
    half = np.arange(n // 2, n)
    mask = vals[half] > 0
    if mask.sum() < 2:
        raise ParameterError("not enough positive trailing values to fit a rate")
    xs = half[mask].astype(float)
    ys = 0.5 * np.log(vals[half][mask])
    slope = np.polyfit(xs, ys, 1)[0]
    return float(math.exp(slope))


# ---------------------------------------------------------------------------
# Closed-form comparison bounds
# ---------------------------------------------------------------------------


def stage_end_bound(plan, delta0: float, sigma2: float, k: int) -> float:
    """Expected gap bound at the end of stage k of the geometric schedule.

    2 / 2^((p+1)(k-1)) * exp(-n1/sqrt(kappa)) * delta0 + sigma2 sqrt(kappa) / (L 2^(k-1)).
    """
    if k < 1:
        raise ParameterError("stage index must be >= 1")
    prof = plan.profile
    sk = math.sqrt(prof.kappa)
    bias = 2.0 / 2.0 ** ((plan.p + 1) * (k - 1)) * math.exp(-plan.n1 / sk) * delta0
    var = sigma2 * sk / (prof.L * 2.0 ** (k - 1))
    return bias + var


def multistage_envelope(
    profile: StrongConvexityProfile,
    p: float,
    n1: int,
    n: int,
    delta0: float,
    sigma2: float,
    const: float = 1.0,
) -> float:
    """Anytime bound after n of the geometrically scheduled iterations.

    const * [ (8(p+1) sqrt(kappa) log 2)^(p+1) / (n-n1)^(p+1)
              * exp(-n1/sqrt(kappa)) delta0  +  (p+1) sigma2 / ((n-n1) mu) ].
    The leading constant is not explicit in the analysis; it is exposed as
    a parameter (default 1) and calibrated once by the tests.
    """
    profile.require_strongly_convex()
    if n <= n1:
        raise ParameterError("the anytime bound needs n > n1")
    sk = math.sqrt(profile.kappa)
    bias = ((8.0 * (p + 1) * sk * math.log(2.0)) ** (p + 1) / (n - n1) ** (p + 1)) * math.exp(
        -n1 / sk
    ) * delta0
    var = (p + 1) * sigma2 / ((n - n1) * profile.mu)
    return const * (bias + var)


def single_stage_bound(n: int, p: float, delta0: float, sigma2: float, mu: float) -> float:
    """Bound for one stage with the budget-tuned stepsize.

    2/n^p * delta0 + p sigma2 log(n) / (n mu).
    """
    if n < 1 or mu <= 0:
        raise ParameterError("need n >= 1 and mu > 0")
    return 2.0 / n**p * delta0 + p * sigma2 * math.log(n) / (n * mu)


def balanced_bound(n: int, n1: int, sigma2: float, mu: float) -> float:
    """Variance-floor bound for the noise-balanced first-stage rule.

    36 (1 + log 8) sigma2 / ((n - n1) mu); undefined at n = n1.
    """
    if n <= n1:
        raise ParameterError("the balanced bound needs n > n1")
    if mu <= 0:
        raise ParameterError("mu must be positive")
    return 36.0 * (1.0 + math.log(8.0)) * sigma2 / ((n - n1) * mu)


def convex_mode_bound(n: int, delta0: float, L: float, dist0_sq: float, sigma2: float) -> float:
    """Three-term bound for the regularized run on a merely convex objective.

    2/n * delta0 + L/sqrt(n) * ||x0 - x*||^2 + sigma2 log(n) / (sqrt(n) L).
    """
    if n < 2:
        raise ParameterError("need n >= 2")
    return 2.0 / n * delta0 + L / math.sqrt(n) * dist0_sq + sigma2 * math.log(n) / (math.sqrt(n) * L)


def deterministic_lower_curve(
    n: int, L: float, dist0_sq: float, kappa: float, const: float = 1.0
) -> float:
    """Reference-only noiseless lower-bound shape L ||x0-x*||^2 exp(-c n / sqrt(kappa))."""
    return L * dist0_sq * math.exp(-const * n / math.sqrt(kappa))


def variance_lower_curve(n: int, sigma2: float, mu: float, const: float = 1.0) -> float:
    """Reference-only noisy lower-bound shape const * sigma2 / (mu n)."""
    if n < 1 or mu <= 0:
        raise ParameterError("need n >= 1 and mu > 0")
    return const * sigma2 / (mu * n)
