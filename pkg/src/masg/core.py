"""Domain types and gradient oracles for strongly convex smooth optimization.

A problem instance is described by a smoothness/strong-convexity profile
(mu, L), an oracle exposing the exact objective and gradient together with
a seeded noisy gradient, and the known optimum (x*, f*). The accelerated
iteration itself is a linear system driven by noisy gradients; its 2x2
Kronecker factors live here as well.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .rng import substream

# Suboptimality values in (-CLAMP_TOL, 0) are treated as rounding noise and
# clamped to zero; anything more negative signals a wrong stored optimum.
CLAMP_TOL = 1e-12

# Membership violations below MEMBERSHIP_TOL * (1 + |f(x)|) are ignored.
MEMBERSHIP_TOL = 1e-9


class ParameterError(ValueError):
    """A parameter lies outside its admissible domain."""


class OptimumError(RuntimeError):
    """The stored optimum is inconsistent with an observed objective value."""


@dataclass(frozen=True)
class StrongConvexityProfile:
    """Strong convexity modulus mu and gradient Lipschitz constant L.

    mu == 0 marks a merely convex objective (the condition number is then
    infinite); every operation that needs strong convexity checks for it.
    """

    mu: float
    L: float

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ParameterError(f"L must be positive and finite, got {self.L}")
        if not (0 <= self.mu <= self.L):
            raise ParameterError(f"need 0 <= mu <= L, got mu={self.mu}, L={self.L}")

    @property
    def kappa(self) -> float:
        """Condition number L / mu (inf for merely convex profiles)."""
        return self.L / self.mu if self.mu > 0 else math.inf

    @property
    def strongly_convex(self) -> bool:
        return self.mu > 0

    def require_strongly_convex(self) -> None:
        if not self.strongly_convex:
            raise ParameterError("operation requires mu > 0")


@dataclass(frozen=True)
class NoiseModel:
    """Second-moment bound sigma2 + eta2 * ||x - x*||^2 on the gradient noise.

    sigma2 is None for oracles whose noise is unbiased with finite but
    unknown variance (minibatch sampling); such oracles are rejected by
    every rule that needs the numeric value.
    """

    sigma2: Optional[float]
    eta2: float = 0.0

    def __post_init__(self):
        if self.sigma2 is not None and self.sigma2 < 0:
            raise ParameterError("sigma2 must be nonnegative")
        if self.eta2 < 0:
            raise ParameterError("eta2 must be nonnegative")

    @property
    def known(self) -> bool:
        return self.sigma2 is not None

    def require_known(self) -> float:
        if self.sigma2 is None:
            raise ParameterError("this rule needs a known noise variance bound")
        return self.sigma2


@dataclass(frozen=True)
class IterateState:
    """Stacked momentum state (x_curr, x_prev)."""

    x_curr: np.ndarray
    x_prev: np.ndarray

    def __post_init__(self):
        if self.x_curr.shape != self.x_prev.shape or self.x_curr.ndim != 1:
            raise ParameterError("state components must be equal-length vectors")

    @property
    def dimension(self) -> int:
        return self.x_curr.shape[0]

    def first_block(self) -> np.ndarray:
        """Projection of the stacked state onto the current iterate."""
        return self.x_curr


@dataclass(frozen=True)
class SystemMatrices:
    """2x2 / 2x1 / 1x2 Kronecker factors of the momentum iteration.

    The full system matrices are (factor kron I_d) and are never
    materialized; all operations act blockwise.
    """

    a_tilde: np.ndarray
    b_tilde: np.ndarray
    c_tilde: np.ndarray
    alpha: float
    beta: float

    @classmethod
    def from_params(cls, alpha: float, beta: float) -> "SystemMatrices":
        a = np.array([[1.0 + beta, -beta], [1.0, 0.0]])
        b = np.array([[-alpha], [0.0]])
        c = np.array([[1.0 + beta, -beta]])
        return cls(a, b, c, float(alpha), float(beta))


class GradientOracle:
    """Objective, exact gradient, seeded noisy gradient, and known optimum.

    Immutable after construction and safe to share across concurrent runs;
    each run passes its own generator to :meth:`noisy_gradient`. When no
    generator is given, a fallback stream seeded at construction is used
    (convenient for single-threaded use, not for concurrent runs).

    `hessian` is set for quadratic objectives; it lets the suboptimality
    be evaluated in the centered form 0.5 (x-x*)' H (x-x*), which is exact
    for quadratics and does not lose precision near the optimum.
    """

    def __init__(
        self,
        dimension: int,
        objective: Callable[[np.ndarray], float],
        gradient: Callable[[np.ndarray], np.ndarray],
        profile: StrongConvexityProfile,
        x_opt: np.ndarray,
        f_opt: float,
        noise: NoiseModel = NoiseModel(0.0),
        noisy_gradient: Optional[Callable[[np.ndarray, np.random.Generator], np.ndarray]] = None,
        hessian: Optional[np.ndarray] = None,
        minibatch_gradient: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
        finite_sum_size: Optional[int] = None,
        seed: int = 0,
        name: str = "oracle",
        extras: Optional[dict] = None,
    ):
        self.dimension = int(dimension)
        self.objective = objective
        self.gradient = gradient
        self.profile = profile
        self.x_opt = x_opt
        self.f_opt = f_opt
        self.noise = noise
        self.hessian = hessian
        self.minibatch_gradient = minibatch_gradient
        self.finite_sum_size = finite_sum_size
        self.name = name
        self.extras = dict(extras or {})
        self._noisy = noisy_gradient if noisy_gradient is not None else (lambda x, rng: gradient(x))
        self._fallback_rng = substream(seed, 0xFA11)
        self.clamp_count = 0  # diagnostic only, not part of the run state

    def noisy_gradient(self, x: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        if rng is None:
            rng = self._fallback_rng
        return self._noisy(x, rng)

    @property
    def is_finite_sum(self) -> bool:
        return self.finite_sum_size is not None

    def replace(self, **kwargs) -> "GradientOracle":
        """Copy with selected fields overridden (used by noise wrappers)."""
        base = dict(
            dimension=self.dimension,
            objective=self.objective,
            gradient=self.gradient,
            profile=self.profile,
            x_opt=self.x_opt,
            f_opt=self.f_opt,
            noise=self.noise,
            noisy_gradient=self._noisy,
            hessian=self.hessian,
            minibatch_gradient=self.minibatch_gradient,
            finite_sum_size=self.finite_sum_size,
            name=self.name,
            extras=self.extras,
        )
        base.update(kwargs)
        return GradientOracle(**base)


def critical_momentum(alpha: float, mu: float) -> float:
    """Momentum (1 - sqrt(alpha mu)) / (1 + sqrt(alpha mu)).

    For quadratics this choice gives the fastest asymptotic rate
    1 - sqrt(alpha mu) at the given stepsize.
    """
    s = math.sqrt(alpha * mu)
    return (1.0 - s) / (1.0 + s)


def make_asg_params(alpha: float, profile: StrongConvexityProfile):
    """Validate a stepsize and build (beta, system matrices) for it.

    Requires 0 < alpha <= 1/L (a relative slack of a few ulp is allowed so
    that boundary stepsizes computed through different expressions are not
    rejected spuriously).
    """
    profile.require_strongly_convex()
    if not (alpha > 0):
        raise ParameterError(f"stepsize must be positive, got {alpha}")
    if alpha * profile.L > 1.0 + 1e-12:
        raise ParameterError(
            f"stepsize {alpha} exceeds 1/L = {1.0 / profile.L}"
        )
    beta = critical_momentum(alpha, profile.mu)
    return beta, SystemMatrices.from_params(alpha, beta)


@dataclass
class MembershipReport:
    """Worst-case margins from sampling the two-sided curvature inequality.

    Positive margins are violations beyond the rounding tolerance; both are
    clipped at zero when every sampled pair satisfies its inequality.
    """

    pairs: int
    lower_margin: float
    upper_margin: float
    lower_violations: int
    upper_violations: int

    @property
    def passed(self) -> bool:
        return self.lower_violations == 0 and self.upper_violations == 0


def check_membership(
    oracle: GradientOracle,
    sample_count: int,
    rng: np.random.Generator,
    radius: float = 1.0,
) -> MembershipReport:
    """Sample pairs (x, y) and test the declared (mu, L) envelope.

    For each pair the Bregman gap D = f(x) - f(y) - grad f(y)' (x - y) must
    satisfy mu/2 ||x-y||^2 <= D <= L/2 ||x-y||^2. Violations below
    MEMBERSHIP_TOL * (1 + |f(x)|) are floating-point noise and ignored.
    """
    if sample_count < 1:
        raise ParameterError("sample_count must be positive")
    mu, L = oracle.profile.mu, oracle.profile.L
    d = oracle.dimension
    center = np.asarray(oracle.x_opt, dtype=float)
    lower_margin = upper_margin = 0.0
    lower_viol = upper_viol = 0
    for _ in range(sample_count):
        x = center + radius * rng.standard_normal(d)
        y = center + radius * rng.standard_normal(d)
        diff = x - y
        sq = float(diff @ diff)
        gap = float(oracle.objective(x) - oracle.objective(y) - oracle.gradient(y) @ diff)
        tol = MEMBERSHIP_TOL * (1.0 + abs(float(oracle.objective(x))))
        low = 0.5 * mu * sq - gap
        high = gap - 0.5 * L * sq
        if low > tol:
            lower_viol += 1
            lower_margin = max(lower_margin, low)
        if high > tol:
            upper_viol += 1
            upper_margin = max(upper_margin, high)
    return MembershipReport(sample_count, lower_margin, upper_margin, lower_viol, upper_viol)


def suboptimality(oracle: GradientOracle, x: np.ndarray) -> float:
    """Objective gap f(x) - f*.

    Quadratic oracles evaluate the gap in centered form through the stored
    Hessian, which is identical in exact arithmetic and keeps full relative
    precision near the optimum. Values in (-CLAMP_TOL, 0) clamp to zero
    (counted on the oracle); more negative values raise, since they mean
    the stored f* is wrong.
    """
    if oracle.hessian is not None:
        e = x - oracle.x_opt
        gap = float(0.5 * (e @ (oracle.hessian @ e)))
    else:
        gap = float(oracle.objective(x) - oracle.f_opt)
    if gap < 0:
        if gap <= -CLAMP_TOL:
            raise OptimumError(
                f"suboptimality {gap} below -{CLAMP_TOL}: stored optimum is inconsistent"
            )
        oracle.clamp_count += 1
        return 0.0
    return gap
