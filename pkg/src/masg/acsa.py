"""Accelerated stochastic approximation (AC-SA) and its momentum-form twin.

AC-SA advances three coupled sequences (md / plain / ag) from user-supplied
stepsize parameters {eta_t}, {gamma_t}. The same iterates can be produced
by the two-sequence momentum recursion with time-varying stepsize
alpha_t = eta_t^2 / (mu + gamma_t) and momentum
beta_t = eta_t (1 - eta_{t-1}) [(1 - eta_t) mu + gamma_t]
         / (eta_{t-1} [gamma_t + (1 - eta_t^2) mu]),
with beta_1 = 0 under the x_0 = x_{-1} start convention. Both runners
query the noisy oracle at the same points in the same order, so sharing a
seed makes their runs directly comparable; the equivalence report below
quantifies the agreement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .core import (
    GradientOracle,
    IterateState,
    ParameterError,
    StrongConvexityProfile,
    suboptimality,
)
from .optimizers import RunTrace, _TraceBuilder, _check_finite
from .rng import substream


@dataclass(frozen=True)
class AcsaParams:
    """Stepsize parameter sequences; eta_t in (0, 1], gamma_t > 0."""

    eta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        if eta.shape != gamma.shape or eta.ndim != 1 or len(eta) == 0:
            raise ParameterError("eta and gamma must be equal-length nonempty sequences")
        if np.any(eta <= 0) or np.any(eta > 1):
            raise ParameterError("every eta_t must lie in (0, 1]")
        if np.any(gamma <= 0):
            raise ParameterError("every gamma_t must be positive")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "gamma", gamma)

    def __len__(self) -> int:
        return len(self.eta)


def _check_denominators(params: AcsaParams, mu: float) -> None:
    den = params.gamma + (1.0 - params.eta**2) * mu
    if np.any(den <= 0):
        raise ParameterError("gamma_t + (1 - eta_t^2) mu must be positive for every t")


def ac_sa(
    x0: np.ndarray,
    params: AcsaParams,
    oracle: GradientOracle,
    rng: Optional[np.random.Generator] = None,
    collect_queries: bool = False,
) -> RunTrace:
    """Run AC-SA; the trace follows the aggregated (ag) iterates.

    One noisy-gradient call per iteration, taken at the md point.
    """
    mu = oracle.profile.mu
    _check_denominators(params, mu)
    steps = len(params)
    x_ag = np.array(x0, dtype=float)
    x_pl = x_ag.copy()
    tb = _TraceBuilder("ac_sa", steps, x_ag, oracle, with_lyap=False)
    queries: List[np.ndarray] = []
    iterates: List[np.ndarray] = []
    for t in range(steps):
        e, c = params.eta[t], params.gamma[t]
        x_md = ((1.0 - e) * (mu + c) * x_ag + e * ((1.0 - e) * mu + c) * x_pl) / (
            c + (1.0 - e**2) * mu
        )
        if collect_queries:
            queries.append(x_md.copy())
        g = oracle.noisy_gradient(x_md, rng)
        tb.calls += 1
        x_pl = (e * mu * x_md + ((1.0 - e) * mu + c) * x_pl - e * g) / (mu + c)
        x_ag = e * x_pl + (1.0 - e) * x_ag
        _check_finite(x_ag, 1, t + 1)
        tb.within[t + 1] = t + 1
        tb.sub[t + 1] = suboptimality(oracle, x_ag)
        if collect_queries:
            iterates.append(x_ag.copy())
    trace = tb.finish(IterateState(x_ag, x_pl), steps, {"form": "ac_sa"})
    if collect_queries:
        trace.info["queries"] = queries
        trace.info["iterates"] = iterates
    return trace


def ac_sa_as_asg_params(
    params: AcsaParams, profile: StrongConvexityProfile
) -> Tuple[np.ndarray, np.ndarray]:
    """Time-varying (alpha_t, beta_t) reproducing AC-SA's ag iterates.

    beta_1 is 0 by the x_0 = x_{-1} convention, which makes the first
    momentum step coincide with AC-SA's first md point exactly.
    """
    mu = profile.mu
    _check_denominators(params, mu)
    eta, gamma = params.eta, params.gamma
    alphas = eta**2 / (mu + gamma)
    betas = np.zeros_like(alphas)
    for t in range(1, len(params)):
        e, ep, c = eta[t], eta[t - 1], gamma[t]
        betas[t] = e * (1.0 - ep) * ((1.0 - e) * mu + c) / (ep * (c + (1.0 - e**2) * mu))
    return alphas, betas


def varying_asg(
    x0: np.ndarray,
    alphas: np.ndarray,
    betas: np.ndarray,
    oracle: GradientOracle,
    rng: Optional[np.random.Generator] = None,
    collect_queries: bool = False,
    algorithm: str = "varying_asg",
) -> RunTrace:
    """Momentum recursion with per-step (alpha_t, beta_t)."""
    alphas = np.asarray(alphas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    if alphas.shape != betas.shape or alphas.ndim != 1:
        raise ParameterError("alphas and betas must be equal-length sequences")
    if np.any(alphas <= 0):
        raise ParameterError("stepsizes must be positive")
    steps = len(alphas)
    xc = np.array(x0, dtype=float)
    xp = xc.copy()
    tb = _TraceBuilder(algorithm, steps, xc, oracle, with_lyap=False)
    queries: List[np.ndarray] = []
    iterates: List[np.ndarray] = []
    for t in range(steps):
        y = (1.0 + betas[t]) * xc - betas[t] * xp
        if collect_queries:
            queries.append(y.copy())
        g = oracle.noisy_gradient(y, rng)
        tb.calls += 1
        xc, xp = y - alphas[t] * g, xc
        _check_finite(xc, 1, t + 1)
        tb.within[t + 1] = t + 1
        tb.sub[t + 1] = suboptimality(oracle, xc)
        if collect_queries:
            iterates.append(xc.copy())
    trace = tb.finish(IterateState(xc, xp), steps, {"form": "varying_asg"})
    if collect_queries:
        trace.info["queries"] = queries
        trace.info["iterates"] = iterates
    return trace


@dataclass
class EquivalenceReport:
    """Agreement between AC-SA and its momentum form under shared streams."""

    sequences: int
    seeds: int
    steps: int
    max_query_deviation: float
    max_iterate_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return (
            self.max_query_deviation <= self.tolerance
            and self.max_iterate_deviation <= self.tolerance
        )


def _rel_dev(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(a))), 1.0)
    return float(np.max(np.abs(a - b))) / scale


def equivalence_report(
    oracle: GradientOracle,
    x0: np.ndarray,
    steps: int = 100,
    sequences: int = 5,
    seeds: int = 5,
    tolerance: float = 1e-10,
    param_seed: int = 2024,
) -> EquivalenceReport:
    """Run both forms over random parameter sequences and shared noise streams.

    Checks that the gradient query points agree (same points, same order)
    before comparing iterates; both must match to the stated relative
    tolerance at every step.
    """
    mu = oracle.profile.mu
    worst_q = worst_x = 0.0
    for s in range(sequences):
        pr = substream(param_seed, s)
        params = AcsaParams(pr.uniform(0.1, 1.0, steps), pr.uniform(0.5 * mu, 5.0 * mu, steps))
        alphas, betas = ac_sa_as_asg_params(params, oracle.profile)
        for seed in range(seeds):
            t1 = ac_sa(x0, params, oracle, substream(seed, 1), collect_queries=True)
            t2 = varying_asg(x0, alphas, betas, oracle, substream(seed, 1), collect_queries=True)
            # queries must be the same points in the same order before
            # iterate agreement means anything
            worst_q = max(
                worst_q,
                max(_rel_dev(a, b) for a, b in zip(t1.info["queries"], t2.info["queries"])),
            )
            worst_x = max(
                worst_x,
                max(_rel_dev(a, b) for a, b in zip(t1.info["iterates"], t2.info["iterates"])),
            )
    return EquivalenceReport(sequences, seeds, steps, worst_q, worst_x, tolerance)
