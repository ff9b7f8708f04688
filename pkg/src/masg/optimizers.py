"""Momentum optimizers: the accelerated primitive, its multistage variants,
plain baselines, the state-dependent-noise mode, and the convex-mode wrapper.

All runners share one contract: exactly one noisy-gradient call per
iteration, a trace of the objective gap at every iterate, determinism as a
pure function of (start point, parameters, seed), and a hard abort on
non-finite iterates. A run is strictly sequential; independent runs may
execute concurrently because oracles are immutable and every run owns its
generator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .certify import (
    LyapunovCertificate,
    convex_mode_bound,
    balanced_bound,
    general_noise_certificate,
    lyapunov_certificate,
    lyapunov_value,
    single_stage_bound,
    step_size_cap,
)
from .core import (
    GradientOracle,
    IterateState,
    ParameterError,
    critical_momentum,
    make_asg_params,
    suboptimality,
)
from .problems import regularize_for_convex
from .schedules import (
    StagePlan,
    Stage,
    first_stage_balanced,
    first_stage_default,
    plan_for_budget,
)


class DivergenceError(RuntimeError):
    """An iterate left the finite range; carries stage/iteration context."""

    def __init__(self, message: str, stage: int, iteration: int):
        super().__init__(message)
        self.stage = stage
        self.iteration = iteration


@dataclass(frozen=True)
class AsgConfig:
    """Constant-parameter momentum stage: stepsize, momentum, step budget."""

    alpha: float
    beta: float
    steps: int

    def __post_init__(self):
        if self.alpha <= 0:
            raise ParameterError("alpha must be positive")
        if not (0.0 <= self.beta < 1.0):
            raise ParameterError("beta must lie in [0, 1)")
        if self.steps < 0:
            raise ParameterError("steps must be nonnegative")


@dataclass
class RunTrace:
    """Per-iteration record of a single run.

    `iterations` counts gradient calls (0 is the start point); `stage` and
    `within_stage` give the schedule position of each iterate. Vector
    checkpoints are kept only at stage boundaries; everything else is
    scalar, which is all the reports need.
    """

    algorithm: str
    iterations: np.ndarray
    stage: np.ndarray
    within_stage: np.ndarray
    suboptimality: np.ndarray
    final_state: IterateState
    oracle_calls: int
    lyapunov: Optional[np.ndarray] = None
    checkpoints: List[Tuple[int, np.ndarray]] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not np.all(np.diff(self.iterations) > 0):
            raise ValueError("iteration indices must be strictly increasing")
        if np.any(self.suboptimality < 0):
            raise ValueError("suboptimality must be nonnegative")


def _check_finite(x: np.ndarray, stage: int, iteration: int) -> None:
    # one cheap reduction instead of an elementwise isfinite scan
    if not math.isfinite(float(x @ x)):
        raise DivergenceError(
            f"non-finite iterate at stage {stage}, global iteration {iteration}",
            stage,
            iteration,
        )


def asg_step(
    state: IterateState,
    config: AsgConfig,
    oracle: GradientOracle,
    rng: Optional[np.random.Generator] = None,
) -> IterateState:
    """One momentum step: query at the extrapolated point, move against it.

    y = (1 + beta) x_curr - beta x_prev;  next = y - alpha * noisy_grad(y).
    Exactly one oracle call.
    """
    make_asg_params(config.alpha, oracle.profile)  # domain check vs this oracle
    y = (1.0 + config.beta) * state.x_curr - config.beta * state.x_prev
    x_next = y - config.alpha * oracle.noisy_gradient(y, rng)
    _check_finite(x_next, stage=1, iteration=0)
    return IterateState(x_next, state.x_curr)


class _TraceBuilder:
    def __init__(self, algorithm: str, budget: int, x0: np.ndarray, oracle: GradientOracle, with_lyap: bool):
        self.algorithm = algorithm
        self.n = np.arange(budget + 1)
        self.stage = np.ones(budget + 1, dtype=int)
        self.within = np.zeros(budget + 1, dtype=int)
        self.sub = np.zeros(budget + 1)
        self.lyap = np.zeros(budget + 1) if with_lyap else None
        self.sub[0] = suboptimality(oracle, x0)
        self.checkpoints: List[Tuple[int, np.ndarray]] = []
        self.calls = 0

    def finish(self, state: IterateState, used: int, info: dict) -> RunTrace:
        sl = slice(0, used + 1)
        return RunTrace(
            algorithm=self.algorithm,
            iterations=self.n[sl],
            stage=self.stage[sl],
            within_stage=self.within[sl],
            suboptimality=self.sub[sl],
            final_state=state,
            oracle_calls=self.calls,
            lyapunov=None if self.lyap is None else self.lyap[sl],
            checkpoints=self.checkpoints,
            info=info,
        )


def _stage_loop(
    xc: np.ndarray,
    xp: np.ndarray,
    alpha: float,
    beta: float,
    steps: int,
    oracle: GradientOracle,
    rng: Optional[np.random.Generator],
    tb: _TraceBuilder,
    start: int,
    stage_index: int,
    cert: Optional[LyapunovCertificate],
    measure: GradientOracle,
):
    """Run `steps` iterations of one stage, recording into the trace arrays."""
    noisy = oracle.noisy_gradient
    n = start
    for m in range(1, steps + 1):
        y = (1.0 + beta) * xc - beta * xp
        x_next = y - alpha * noisy(y, rng)
        _check_finite(x_next, stage_index, n + 1)
        xc, xp = x_next, xc
        n += 1
        tb.calls += 1
        tb.stage[n] = stage_index
        tb.within[n] = m
        tb.sub[n] = suboptimality(measure, xc)
        if tb.lyap is not None and cert is not None:
            tb.lyap[n] = lyapunov_value(cert, IterateState(xc, xp), oracle)
    return xc, xp, n


def run_stage(
    x_init: np.ndarray,
    config: AsgConfig,
    oracle: GradientOracle,
    rng: Optional[np.random.Generator] = None,
    cert: Optional[LyapunovCertificate] = None,
) -> Tuple[RunTrace, IterateState]:
    """One restarted stage: both state components start at x_init.

    Returns the per-iteration trace (including the start point) and the
    final stacked state.
    """
    make_asg_params(config.alpha, oracle.profile)
    x0 = np.array(x_init)
    tb = _TraceBuilder("stage", config.steps, x0, oracle, with_lyap=cert is not None)
    if tb.lyap is not None:
        tb.lyap[0] = lyapunov_value(cert, IterateState(x0, x0.copy()), oracle)
    xc, xp, used = _stage_loop(
        x0.copy(), x0.copy(), config.alpha, config.beta, config.steps, oracle, rng, tb, 0, 1, cert, oracle
    )
    state = IterateState(xc, xp)
    return tb.finish(state, used, {"alpha": config.alpha, "beta": config.beta}), state


def m_asg(
    x0: np.ndarray,
    plan: StagePlan,
    oracle: GradientOracle,
    rng: Optional[np.random.Generator] = None,
    budget: Optional[int] = None,
    cert_factory: Optional[Callable[[float], LyapunovCertificate]] = None,
    algorithm: str = "m_asg",
    measure: Optional[GradientOracle] = None,
) -> RunTrace:
    """Run the stages of a plan sequentially with the restart convention.

    Each stage starts with x_prev = x_curr = last iterate of the previous
    stage. `budget` truncates the final stage; `cert_factory` (stepsize ->
    certificate) turns on per-iterate potential recording.
    """
    if plan.profile.mu != oracle.profile.mu or plan.profile.L != oracle.profile.L:
        raise ParameterError("plan profile does not match oracle profile")
    measure = measure or oracle
    total = plan.total_iterations if budget is None else min(budget, plan.total_iterations)
    x_start = np.array(x0)
    tb = _TraceBuilder(algorithm, total, x_start, measure, with_lyap=cert_factory is not None)
    xc = x_start.copy()
    n = 0
    state = IterateState(xc.copy(), xc.copy())
    stage_infos = []
    for k, st in enumerate(plan.stages, start=1):
        if n >= total:
            break
        cert = cert_factory(st.alpha) if cert_factory is not None else None
        if k == 1 and tb.lyap is not None:
            tb.lyap[0] = lyapunov_value(cert, IterateState(xc, xc.copy()), oracle)
        xp = xc.copy()  # restart: both components at the handoff point
        steps = min(st.length, total - n)
        xc, xp, n = _stage_loop(xc, xp, st.alpha, st.beta, steps, oracle, rng, tb, n, k, cert, measure)
        state = IterateState(xc, xp)
        tb.checkpoints.append((n, xc.copy()))
        stage_infos.append({"stage": k, "alpha": st.alpha, "beta": st.beta, "steps": steps})
    trace = tb.finish(state, n, {"plan": plan, "stages_run": stage_infos})
    return trace


def m_asg_star(
    x0: np.ndarray,
    oracle: GradientOracle,
    budget: int,
    rng: Optional[np.random.Generator] = None,
    delta: Optional[float] = None,
) -> RunTrace:
    """Multistage run with the first stage sized from known delta and sigma2.

    The first-stage length balances the bias decay against the variance
    floor; the remaining stages follow the geometric plan with p = 1.
    Rejected when the noise variance is unknown or zero (the balancing rule
    and its bound are undefined there).
    """
    sigma2 = oracle.noise.require_known()
    if sigma2 == 0:
        raise ParameterError("m_asg_star needs sigma2 > 0; run m_asg for the noiseless case")
    if delta is None:
        delta = suboptimality(oracle, np.asarray(x0))
        delta = max(delta, np.finfo(float).tiny)
    n1 = first_stage_balanced(oracle.profile, delta, sigma2, budget=budget)
    plan = plan_for_budget(oracle.profile, 1.0, n1, budget)
    trace = m_asg(x0, plan, oracle, rng, budget=budget, algorithm="m_asg_star")
    bound = balanced_bound(budget, n1, sigma2, oracle.profile.mu) if budget > n1 else None
    trace.info.update({"n1": n1, "delta": delta, "balanced_bound": bound})
    return trace


def standard_gd(
    x0: np.ndarray,
    oracle: GradientOracle,
    n: int,
    rng: Optional[np.random.Generator] = None,
) -> RunTrace:
    """Plain (stochastic) gradient descent at the standard stepsize 1/L."""
    oracle.profile.require_strongly_convex()
    if n < 0:
        raise ParameterError("budget must be nonnegative")
    alpha = 1.0 / oracle.profile.L
    x = np.array(x0)
    tb = _TraceBuilder("standard_gd", n, x, oracle, with_lyap=False)
    noisy = oracle.noisy_gradient
    for i in range(1, n + 1):
        x = x - alpha * noisy(x, rng)
        _check_finite(x, 1, i)
        tb.calls += 1
        tb.within[i] = i
        tb.sub[i] = suboptimality(oracle, x)
    return tb.finish(IterateState(x, x.copy()), n, {"alpha": alpha})


def standard_asg(
    x0: np.ndarray,
    oracle: GradientOracle,
    n: int,
    rng: Optional[np.random.Generator] = None,
) -> RunTrace:
    """Single-stage momentum baseline: alpha = 1/L, beta = (sqrt(k)-1)/(sqrt(k)+1)."""
    oracle.profile.require_strongly_convex()
    if n < 0:
        raise ParameterError("budget must be nonnegative")
    sk = math.sqrt(oracle.profile.kappa)
    beta = (sk - 1.0) / (sk + 1.0)
    alpha = 1.0 / oracle.profile.L
    x = np.array(x0)
    tb = _TraceBuilder("standard_asg", n, x, oracle, with_lyap=False)
    xc, xp, used = _stage_loop(x.copy(), x.copy(), alpha, beta, n, oracle, rng, tb, 0, 1, None, oracle)
    return tb.finish(IterateState(xc, xp), used, {"alpha": alpha, "beta": beta})


def single_stage_tuned(
    x0: np.ndarray,
    oracle: GradientOracle,
    n: int,
    p: float,
    rng: Optional[np.random.Generator] = None,
) -> RunTrace:
    """One stage with the budget-tuned stepsize ((p sqrt(k) log n / n)^2 / L).

    The tuning trades the linear bias decay for a 1/n variance term. The
    hard requirement is alpha <= 1/L; the budget hypothesis
    n >= p sqrt(kappa) max(2 log(p sqrt(kappa)), e) only draws a warning.
    """
    oracle.profile.require_strongly_convex()
    if n < 2:
        raise ParameterError("need n >= 2")
    if p < 1:
        raise ParameterError("p must be >= 1")
    sk = math.sqrt(oracle.profile.kappa)
    c = p * sk * math.log(n) / n
    if c > 1.0 + 1e-12:
        raise ParameterError(
            f"budget n={n} too small for p={p}, kappa={oracle.profile.kappa}: stepsize would exceed 1/L"
        )
    if n < p * sk * max(2.0 * math.log(p * sk), math.e):
        warnings.warn("budget below the tuned-stepsize hypothesis; the bound may not apply", stacklevel=2)
    alpha = min(c, 1.0) ** 2 / oracle.profile.L
    beta = critical_momentum(alpha, oracle.profile.mu)
    x = np.array(x0)
    tb = _TraceBuilder("single_stage", n, x, oracle, with_lyap=False)
    xc, xp, used = _stage_loop(x.copy(), x.copy(), alpha, beta, n, oracle, rng, tb, 0, 1, None, oracle)
    info = {"alpha": alpha, "beta": beta, "p": p}
    if oracle.noise.known:
        delta0 = suboptimality(oracle, np.asarray(x0))
        info["bound"] = single_stage_bound(n, p, delta0, oracle.noise.sigma2, oracle.profile.mu)
    return tb.finish(IterateState(xc, xp), used, info)


def m_asg_general_noise(
    x0: np.ndarray,
    oracle: GradientOracle,
    budget: int,
    rng: Optional[np.random.Generator] = None,
    p: float = 1.0,
    n1: Optional[int] = None,
) -> RunTrace:
    """Multistage run under state-dependent noise: stepsizes clamped to the cap.

    Requires kappa >= 4. Every stage stepsize is min of the geometric value
    and the cap min(1/L, mu^3/(60 eta2)^2); momenta stay critical for the
    clamped stepsizes. The trace records the state-noise potential at every
    iterate for recursion checks.
    """
    profile = oracle.profile
    profile.require_strongly_convex()
    if profile.kappa < 4:
        raise ParameterError("the state-dependent-noise mode needs kappa >= 4")
    eta2 = oracle.noise.eta2
    cap = step_size_cap(profile, eta2)
    if n1 is None:
        n1 = first_stage_default(profile, p)
    raw = plan_for_budget(profile, p, n1, budget)
    stages = tuple(
        Stage(st.length, min(st.alpha, cap), critical_momentum(min(st.alpha, cap), profile.mu))
        for st in raw.stages
    )
    plan = StagePlan(profile, raw.p, raw.n1, raw.base_len, stages)
    factory = lambda a: general_noise_certificate(a, profile, eta2)
    trace = m_asg(x0, plan, oracle, rng, budget=budget, cert_factory=factory, algorithm="m_asg_general")
    trace.info.update({"alpha_cap": cap, "eta2": eta2, "n1": n1})
    return trace


def convex_asg(
    x0: np.ndarray,
    oracle: GradientOracle,
    n: int,
    rng: Optional[np.random.Generator] = None,
) -> RunTrace:
    """Single regularized stage for merely convex objectives (mu = 0).

    Adds lambda/2 ||x - x0||^2 with lambda = L/(sqrt(n)-1), runs one stage
    at alpha = (log n)^2 / (n^(3/2) L) with the critical momentum for
    (alpha, lambda), and reports the gap of the original objective.
    """
    if oracle.profile.mu != 0:
        raise ParameterError("convex_asg expects a merely convex oracle (mu = 0)")
    if n < 2:
        raise ParameterError("need n >= 2")
    x0 = np.asarray(x0, dtype=float)
    reg = regularize_for_convex(oracle, n, x0)
    L = oracle.profile.L
    alpha = math.log(n) ** 2 / (n**1.5 * L)
    if alpha * reg.profile.L > 1.0 + 1e-12:
        raise ParameterError("regularized stepsize exceeded 1/(L + lambda)")
    beta = critical_momentum(alpha, reg.profile.mu)
    plan = StagePlan(
        reg.profile, 1.0, n, 1, (Stage(n, alpha, beta),)
    )
    trace = m_asg(x0, plan, reg, rng, algorithm="convex_asg", measure=oracle)
    info = {"lambda": reg.extras["reg_lambda"], "alpha": alpha, "beta": beta}
    if oracle.noise.known:
        delta0 = suboptimality(oracle, x0)
        dist0 = float(np.sum((x0 - oracle.x_opt) ** 2))
        info["bound"] = convex_mode_bound(n, delta0, L, dist0, oracle.noise.sigma2)
    trace.info.update(info)
    return trace
