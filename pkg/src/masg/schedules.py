"""Stage plans: geometric stage lengths, shrinking stepsizes, first-stage rules.

A plan fixes, for every stage k, the length n_k, stepsize alpha_k and
momentum beta_k. Stage 1 runs an arbitrary length n1 at alpha = 1/L; stage
k >= 2 runs 2^k * base_len iterations at alpha = 1/(4^k L), where
base_len = ceil(sqrt(kappa) * log(2^(p+2))). Everything is exact integer
arithmetic on top of one guarded ceiling, so identical inputs give
identical schedules on every platform.
"""

from __future__ import annotations

import math
import warnings
from bisect import bisect_left
from dataclasses import dataclass
from typing import Optional, Tuple

from .core import ParameterError, StrongConvexityProfile, critical_momentum

# Guard for ceilings of float expressions that can sit within one ulp of an
# integer: when the fractional part exceeds 1 - CEIL_GUARD the argument is
# nudged down by CEIL_GUARD first, pinning the result across platforms.
CEIL_GUARD = 1e-12


def guarded_ceil(x: float) -> int:
    frac = x - math.floor(x)
    if frac > 1.0 - CEIL_GUARD:
        return math.ceil(x - CEIL_GUARD)
    return math.ceil(x)


@dataclass(frozen=True)
class Stage:
    length: int
    alpha: float
    beta: float


@dataclass(frozen=True)
class StagePlan:
    """Complete multistage schedule: per-stage (length, stepsize, momentum)."""

    profile: StrongConvexityProfile
    p: float
    n1: int
    base_len: int
    stages: Tuple[Stage, ...]

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @property
    def prefix_sums(self) -> Tuple[int, ...]:
        sums, total = [], 0
        for st in self.stages:
            total += st.length
            sums.append(total)
        return tuple(sums)

    @property
    def total_iterations(self) -> int:
        return sum(st.length for st in self.stages)


def schedule_base_length(profile: StrongConvexityProfile, p: float) -> int:
    """ceil(sqrt(kappa) * log(2^(p+2))), the unit of the doubling stages."""
    profile.require_strongly_convex()
    return guarded_ceil(math.sqrt(profile.kappa) * (p + 2.0) * math.log(2.0))


def geometric_plan(
    profile: StrongConvexityProfile, p: float, n1: int, num_stages: int
) -> StagePlan:
    """Build the doubling-length, quartering-stepsize plan.

    Stage 1: n1 iterations at alpha = 1/L. Stage k >= 2: 2^k * base_len
    iterations at alpha = 1/(4^k L), each with the critical momentum for
    its own stepsize.
    """
    profile.require_strongly_convex()
    if p < 1:
        raise ParameterError(f"rate exponent p must be >= 1, got {p}")
    if n1 < 1:
        raise ParameterError(f"first-stage length must be >= 1, got {n1}")
    if num_stages < 1:
        raise ParameterError(f"stage count must be >= 1, got {num_stages}")
    L, mu = profile.L, profile.mu
    base = schedule_base_length(profile, p)
    stages = [Stage(n1, 1.0 / L, critical_momentum(1.0 / L, mu))]
    for k in range(2, num_stages + 1):
        alpha_k = 1.0 / ((4**k) * L)
        stages.append(Stage((2**k) * base, alpha_k, critical_momentum(alpha_k, mu)))
    return StagePlan(profile, float(p), int(n1), base, tuple(stages))


def total_iterations_closed_form(plan: StagePlan, num_stages: Optional[int] = None) -> int:
    """n1 + (2^(K+1) - 4) * base_len for K >= 2 (n1 for K = 1)."""
    K = plan.num_stages if num_stages is None else num_stages
    if K < 1 or K > plan.num_stages:
        raise ParameterError(f"stage count {K} outside plan")
    if K == 1:
        return plan.n1
    return plan.n1 + (2 ** (K + 1) - 4) * plan.base_len


def plan_for_budget(
    profile: StrongConvexityProfile, p: float, n1: int, budget: int
) -> StagePlan:
    """Smallest plan whose total length covers the iteration budget."""
    if budget < 1:
        raise ParameterError("budget must be >= 1")
    if budget <= n1:
        return geometric_plan(profile, p, n1, 1)
    base = schedule_base_length(profile, p)
    K = 2
    while n1 + (2 ** (K + 1) - 4) * base < budget:
        K += 1
    return geometric_plan(profile, p, n1, K)


# ---------------------------------------------------------------------------
# First-stage length rules
# ---------------------------------------------------------------------------


def first_stage_fraction(
    n: int, C: float, profile: Optional[StrongConvexityProfile] = None
) -> int:
    """n1 = floor(n / C) for C >= 2, at least 1.

    Flooring preserves n - n1 >= n (1 - 1/C), the quantity the anytime
    analysis consumes. With a profile given, budgets below 2 sqrt(kappa)
    draw a warning (the optimality argument assumes n >= 2 sqrt(kappa)).
    """
    if C < 2:
        raise ParameterError(f"the fraction rule needs C >= 2, got {C}")
    if n < 1:
        raise ParameterError("budget must be >= 1")
    if profile is not None and n < 2 * math.sqrt(profile.kappa):
        warnings.warn(
            f"budget {n} below 2 sqrt(kappa) = {2 * math.sqrt(profile.kappa):.1f}; "
            "the fraction rule's guarantee assumes a larger budget",
            stacklevel=2,
        )
    return max(1, math.floor(n / C))


def first_stage_default(profile: StrongConvexityProfile, p: float) -> int:
    """n1 = ceil((p+1) sqrt(kappa) log(12 (p+1) kappa)).

    Needs neither the noise level nor the initial gap; with this choice the
    bias term is negligible against the variance floor for any budget.
    """
    profile.require_strongly_convex()
    if p < 1:
        raise ParameterError("p must be >= 1")
    k = profile.kappa
    return guarded_ceil((p + 1.0) * math.sqrt(k) * math.log(12.0 * (p + 1.0) * k))


def first_stage_for_accuracy(
    profile: StrongConvexityProfile, delta: float, eps: float, sigma2: Optional[float]
):
    """First-stage length, stage count and total budget for a target gap.

    Returns (n1, K, n_eps) with
        n1    = ceil(sqrt(kappa) log(4 delta / eps)),
        K     = max(1, ceil(log2(sigma2 sqrt(kappa) / (L eps))) + 2),
        n_eps = n1 + ceil(16 (1 + log 8) sigma2 / (mu eps)).
    With sigma2 = 0 a single stage suffices and K = 1.
    """
    profile.require_strongly_convex()
    if sigma2 is None:
        raise ParameterError("the accuracy rule needs a known noise variance")
    if not (0 < eps < delta):
        raise ParameterError(f"need 0 < eps < delta, got eps={eps}, delta={delta}")
    sk = math.sqrt(profile.kappa)
    n1 = guarded_ceil(sk * math.log(4.0 * delta / eps))
    variance_iters = guarded_ceil(16.0 * (1.0 + math.log(8.0)) * sigma2 / (profile.mu * eps))
    if sigma2 == 0:
        K = 1
    else:
        K = max(1, guarded_ceil(math.log2(sigma2 * sk / (profile.L * eps))) + 2)
    return n1, K, n1 + variance_iters


def first_stage_balanced(
    profile: StrongConvexityProfile,
    delta: float,
    sigma2: Optional[float],
    budget: Optional[int] = None,
) -> int:
    """n1 = ceil(sqrt(kappa) log(2 L delta / (sigma2 sqrt(kappa)))), clamped.

    Balances the bias decay of the first stage against the variance floor.
    A nonpositive logarithm means noise dominates immediately and the rule
    clamps to 1. As sigma2 -> 0 the expression diverges; with a budget
    given it is capped there (with a warning), otherwise capping is the
    caller's job.
    """
    profile.require_strongly_convex()
    if sigma2 is None:
        raise ParameterError("the balanced rule needs a known noise variance")
    if delta <= 0:
        raise ParameterError("delta must be positive")
    if sigma2 == 0:
        if budget is None:
            raise ParameterError("sigma2 = 0 gives an unbounded first stage; pass a budget to cap")
        warnings.warn("sigma2 = 0: first stage capped at the total budget", stacklevel=2)
        return budget
    sk = math.sqrt(profile.kappa)
    arg = 2.0 * profile.L * delta / (sigma2 * sk)
    n1 = 1 if arg <= 1.0 else max(1, guarded_ceil(sk * math.log(arg)))
    if budget is not None and n1 > budget:
        warnings.warn(
            f"balanced first stage {n1} exceeds budget {budget}; capping", stacklevel=2
        )
        return budget
    return n1


# ---------------------------------------------------------------------------
# Iterate bookkeeping
# ---------------------------------------------------------------------------


class IterateLocator:
    """Map a global iteration index to (stage, within-stage index).

    The authoritative map is a binary search over stage prefix sums; an
    iterate sitting exactly on a stage boundary belongs to the end of that
    stage. The float closed form is exposed separately for cross-checking.
    """

    def __init__(self, plan: StagePlan):
        self.plan = plan
        self._prefix = plan.prefix_sums

    def locate(self, n: int):
        if n < 0:
            raise ParameterError("iteration index must be >= 0")
        if n == 0:
            return 1, 0
        if n > self._prefix[-1]:
            raise ParameterError(f"iteration {n} beyond plan length {self._prefix[-1]}")
        k = bisect_left(self._prefix, n)
        m = n - (self._prefix[k - 1] if k > 0 else 0)
        return k + 1, m

    def closed_form_stage(self, n: int) -> int:
        """ceil(log2((n - n1)/base_len + 4) - 1) for n past the first stage."""
        plan = self.plan
        if n <= plan.n1:
            return 1
        ratio = (n - plan.n1 + 4 * plan.base_len) / plan.base_len
        return guarded_ceil(math.log2(ratio) - 1.0)


def locate_iterate(plan: StagePlan, n: int):
    """Stage and within-stage index of global iterate n (prefix-sum rule)."""
    return IterateLocator(plan).locate(n)
