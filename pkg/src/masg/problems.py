"""Problem generators, noise injectors, and the convex-mode regularizer.

Every generator returns an immutable GradientOracle with the optimum
precomputed, so suboptimality traces are exact by construction. Noise is
attached afterwards by wrapping only the noisy-gradient map; the exact
objective and gradient always pass through untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    GradientOracle,
    NoiseModel,
    ParameterError,
    StrongConvexityProfile,
    critical_momentum,
)
from .rng import substream


def _refined_solve(h: np.ndarray, rhs: np.ndarray, dtype) -> np.ndarray:
    """Solve h x = rhs in float64, then iteratively refine in `dtype`.

    Refinement matters only for extended-precision oracles, where the
    stored optimum must be accurate beyond float64 residual level.
    """
    h64 = h.astype(np.float64)
    x = np.linalg.solve(h64, rhs.astype(np.float64)).astype(dtype)
    if np.dtype(dtype) != np.float64:
        for _ in range(3):
            r = rhs - h @ x
            x = x + np.linalg.solve(h64, r.astype(np.float64)).astype(dtype)
    return x


def cycle_laplacian(d: int, dtype=np.float64) -> np.ndarray:
    """Laplacian of the d-cycle: 2 on the diagonal, -1 on the wrapped off-diagonals."""
    if d < 3:
        raise ParameterError("a cycle needs d >= 3")
    q = np.zeros((d, d), dtype=dtype)
    idx = np.arange(d)
    q[idx, idx] = 2.0
    q[idx, (idx + 1) % d] = -1.0
    q[idx, (idx - 1) % d] = -1.0
    return q


def cycle_laplacian_max_eigenvalue(d: int) -> float:
    """max_j 2 - 2 cos(2 pi j / d); equals 4 exactly for even d."""
    if d % 2 == 0:
        return 4.0
    return 2.0 - 2.0 * math.cos(math.pi * (d - 1) / d)


def make_cycle_quadratic(
    d: int,
    lambda_reg: float,
    seed: int,
    b: Optional[np.ndarray] = None,
    dtype=np.float64,
) -> GradientOracle:
    """Quadratic objective 0.5 x'Qx - b'x + lambda ||x||^2 on the cycle graph.

    The Hessian Q + 2 lambda I has spectrum in [2 lambda, lmax(Q) + 2 lambda],
    so the declared profile is mu = 2 lambda, L = lmax(Q) + 2 lambda. The
    linear term b is drawn standard normal from the seed unless given. The
    optimum comes from a direct dense solve. `dtype` switches the whole
    instance (including iterates run on it) to another float precision;
    extended precision is used when verifying bounds that decay below
    float64 resolution.
    """
    if lambda_reg <= 0:
        raise ParameterError("lambda_reg must be positive")
    q = cycle_laplacian(d, dtype=dtype)
    lam = dtype(lambda_reg) if np.dtype(dtype) != np.float64 else float(lambda_reg)
    if b is None:
        b = substream(seed, 0).standard_normal(d)
    b = np.asarray(b, dtype=dtype)
    if b.shape != (d,):
        raise ParameterError(f"b must have shape ({d},)")
    hess = q + 2.0 * lam * np.eye(d, dtype=dtype)
    x_opt = _refined_solve(hess, b, dtype)

    def objective(x):
        return float(0.5 * x @ (q @ x) - b @ x + lam * (x @ x))

    def gradient(x):
        return hess @ x - b

    f_opt = float(0.5 * x_opt @ (q @ x_opt) - b @ x_opt + lam * (x_opt @ x_opt))
    profile = StrongConvexityProfile(2.0 * float(lambda_reg), cycle_laplacian_max_eigenvalue(d) + 2.0 * float(lambda_reg))
    return GradientOracle(
        dimension=d,
        objective=objective,
        gradient=gradient,
        profile=profile,
        x_opt=x_opt,
        f_opt=f_opt,
        hessian=hess,
        seed=seed,
        name="cycle_quadratic",
        extras={"lambda_reg": float(lambda_reg), "seed": seed, "dtype": np.dtype(dtype).name},
    )


def _sigmoid_of_negative(z: np.ndarray) -> np.ndarray:
    """sigmoid(-z) evaluated without overflow on either tail."""
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    e = np.exp(-z[pos])
    out[pos] = e / (1.0 + e)
    out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    return out


def _power_iteration_sq_norm(m: np.ndarray, rng: np.random.Generator, rel_tol: float = 1e-10) -> float:
    """Largest eigenvalue of m'm by power iteration on the Gram matrix."""
    gram = m.T @ m
    v = rng.standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    rq_prev = 0.0
    for _ in range(200_000):
        w = gram @ v
        rq = float(v @ w)
        v = w / np.linalg.norm(w)
        if abs(rq - rq_prev) <= rel_tol * max(rq, 1e-30):
            return rq
        rq_prev = rq
    raise RuntimeError("power iteration did not converge")


def _deterministic_minimize(gradient, profile, x0, tol=1e-12, max_iters=500_000):
    """Noiseless momentum run to gradient-norm tolerance; used to cache optima."""
    alpha = 1.0 / profile.L
    beta = critical_momentum(alpha, profile.mu)
    xc = np.array(x0, dtype=float)
    xp = xc.copy()
    for _ in range(max_iters):
        g = gradient(xc)
        if float(np.linalg.norm(g)) <= tol:
            return xc
        y = (1.0 + beta) * xc - beta * xp
        xc, xp = y - alpha * gradient(y), xc
    raise RuntimeError(f"deterministic solve stalled above gradient tolerance {tol}")


def make_synthetic_logistic(n_samples: int, d: int, seed: int) -> GradientOracle:
    """Regularized logistic regression on synthetic linearly separable labels.

    The data matrix has i.i.d. standard normal entries; labels are the signs
    of the inner products with a hidden normal vector. The objective is the
    mean logistic loss plus lambda ||x||^2 with lambda = 1/sqrt(n_samples),
    giving mu = 2 lambda and L = lmax(M'M)/(4 n_samples) + 2 lambda (spectral
    norm by power iteration). The optimum is cached from a noiseless solve.
    """
    if n_samples < d:
        raise ParameterError("need n_samples >= d")
    m = substream(seed, 0).standard_normal((n_samples, d))
    w_hidden = substream(seed, 1).standard_normal(d)
    y = np.where(m @ w_hidden >= 0, 1.0, -1.0)
    lam = 1.0 / math.sqrt(n_samples)

    def objective(x):
        z = y * (m @ x)
        return float(np.mean(np.logaddexp(0.0, -z)) + lam * (x @ x))

    def gradient(x):
        z = y * (m @ x)
        s = _sigmoid_of_negative(z)
        return -(m.T @ (y * s)) / n_samples + 2.0 * lam * x

    def minibatch_gradient(x, idx):
        mb, yb = m[idx], y[idx]
        z = yb * (mb @ x)
        s = _sigmoid_of_negative(z)
        return -(mb.T @ (yb * s)) / len(idx) + 2.0 * lam * x

    # tiny inflation keeps the declared L an upper bound despite the
    # finite tolerance of the power iteration
    sq_norm = _power_iteration_sq_norm(m, substream(seed, 2)) * (1.0 + 1e-8)
    profile = StrongConvexityProfile(2.0 * lam, sq_norm / (4.0 * n_samples) + 2.0 * lam)
    x_opt = _deterministic_minimize(gradient, profile, np.zeros(d))
    return GradientOracle(
        dimension=d,
        objective=objective,
        gradient=gradient,
        profile=profile,
        x_opt=x_opt,
        f_opt=objective(x_opt),
        minibatch_gradient=minibatch_gradient,
        finite_sum_size=n_samples,
        seed=seed,
        name="synthetic_logistic",
        extras={"n_samples": n_samples, "lambda_reg": lam, "seed": seed},
    )


def make_convex_least_squares(n_samples: int, d: int, rank: int, seed: int) -> GradientOracle:
    """Rank-deficient least squares: merely convex (mu = 0) with known optimum.

    f(x) = 0.5 ||A x - b||^2 with A of the given rank and b in its range, so
    f* = 0 exactly; the stored optimum is the minimum-norm solution. Used by
    the convex-mode wrapper, which supplies the strong convexity itself.
    """
    if not (1 <= rank < d):
        raise ParameterError("need 1 <= rank < d for a merely convex instance")
    if n_samples < d:
        raise ParameterError("need n_samples >= d")
    r = substream(seed, 0)
    a = (r.standard_normal((n_samples, rank)) @ r.standard_normal((rank, d))) / math.sqrt(n_samples)
    x_hidden = substream(seed, 1).standard_normal(d)
    b = a @ x_hidden
    hess = a.T @ a
    lin = a.T @ b
    offset = 0.5 * float(b @ b)

    def objective(x):
        res = a @ x - b
        return float(0.5 * res @ res)

    def gradient(x):
        return hess @ x - lin

    x_opt, *_ = np.linalg.lstsq(a, b, rcond=None)
    L = float(np.linalg.eigvalsh(hess)[-1])
    return GradientOracle(
        dimension=d,
        objective=objective,
        gradient=gradient,
        profile=StrongConvexityProfile(0.0, L),
        x_opt=x_opt,
        f_opt=0.0,
        hessian=hess,
        seed=seed,
        name="convex_least_squares",
        extras={"n_samples": n_samples, "rank": rank, "seed": seed, "offset": offset},
    )


@dataclass(frozen=True)
class NoiseInjector:
    """Description of how gradient noise is produced.

    kind "additive": isotropic Gaussian perturbation whose total expected
    squared norm is sigma2 + eta2 ||x - x*||^2 (per-coordinate variance is
    that total divided by d, so the oracle bound holds with equality).
    kind "minibatch": uniform subsample of a finite-sum gradient; unbiased
    with finite but unknown variance.
    """

    kind: str
    sigma2: float = 0.0
    eta2: float = 0.0
    batch_size: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("additive", "minibatch"):
            raise ParameterError(f"unknown noise kind {self.kind!r}")
        if self.kind == "additive":
            if self.sigma2 < 0 or self.eta2 < 0:
                raise ParameterError("noise variances must be nonnegative")
        else:
            if self.batch_size is None or self.batch_size < 1:
                raise ParameterError("minibatch noise needs a positive batch_size")


def attach_noise(oracle: GradientOracle, injector: NoiseInjector, seed: int) -> GradientOracle:
    """Wrap the oracle's noisy-gradient map; exact maps pass through unchanged.

    The seed only primes the oracle's fallback stream (used when a caller
    does not pass its own generator); runs that manage their own streams
    are unaffected by it.
    """
    if injector.kind == "additive":
        sigma2, eta2 = injector.sigma2, injector.eta2
        gradient = oracle.gradient
        x_opt = oracle.x_opt
        d = oracle.dimension

        def noisy(x, rng):
            g = gradient(x)
            total = sigma2
            if eta2 > 0:
                e = x - x_opt
                total = sigma2 + eta2 * float(e @ e)
            if total == 0:
                return g
            return g + math.sqrt(total / d) * rng.standard_normal(d)

        return oracle.replace(noise=NoiseModel(sigma2, eta2), noisy_gradient=noisy, seed=seed)

    if not oracle.is_finite_sum or oracle.minibatch_gradient is None:
        raise ParameterError("minibatch noise requires a finite-sum oracle")
    n = oracle.finite_sum_size
    batch = injector.batch_size
    if batch > n:
        raise ParameterError(f"batch_size {batch} exceeds sample count {n}")
    minibatch = oracle.minibatch_gradient

    def noisy(x, rng):
        idx = np.sort(rng.choice(n, size=batch, replace=False))
        return minibatch(x, idx)

    return oracle.replace(noise=NoiseModel(None), noisy_gradient=noisy, seed=seed)


def regularize_for_convex(oracle: GradientOracle, n: int, x0: np.ndarray) -> GradientOracle:
    """Proximal-style regularization f(x) + lambda/2 ||x - x0||^2 of a mu = 0 oracle.

    lambda = L / (sqrt(n) - 1) makes the regularized condition number exactly
    sqrt(n). The regularized optimum is solved directly for quadratic bases
    and by a noiseless run otherwise; the attached noisy gradient adds the
    regularizer term to the base oracle's noisy gradient.
    """
    if n < 2:
        raise ParameterError("regularization needs a budget n >= 2")
    L = oracle.profile.L
    lam = L / (math.sqrt(n) - 1.0)
    base_obj, base_grad = oracle.objective, oracle.gradient
    x0 = np.array(x0, dtype=float)

    def objective(x):
        e = x - x0
        return float(base_obj(x) + 0.5 * lam * (e @ e))

    def gradient(x):
        return base_grad(x) + lam * (x - x0)

    def noisy(x, rng):
        return oracle.noisy_gradient(x, rng) + lam * (x - x0)

    profile = StrongConvexityProfile(lam, L + lam)
    if oracle.hessian is not None:
        hess = oracle.hessian + lam * np.eye(oracle.dimension)
        lin = oracle.hessian @ oracle.x_opt + lam * x0
        x_opt = np.linalg.solve(hess, lin)
    else:
        hess = None
        x_opt = _deterministic_minimize(gradient, profile, x0)
    return GradientOracle(
        dimension=oracle.dimension,
        objective=objective,
        gradient=gradient,
        profile=profile,
        x_opt=x_opt,
        f_opt=objective(x_opt),
        noise=oracle.noise,
        noisy_gradient=noisy,
        hessian=hess,
        name=oracle.name + "+prox",
        extras={**oracle.extras, "reg_lambda": lam, "reg_center": x0, "base": oracle},
    )


# ---------------------------------------------------------------------------
# Declarative construction (used by the harness config format)
# ---------------------------------------------------------------------------

PROBLEM_KINDS = ("cycle_quadratic", "synthetic_logistic", "convex_least_squares")


def problem_from_config(cfg: dict) -> GradientOracle:
    """Build a problem oracle from a flat key/value description."""
    kind = cfg.get("kind")
    if kind == "cycle_quadratic":
        return make_cycle_quadratic(int(cfg["dimension"]), float(cfg["lambda_reg"]), int(cfg["seed"]))
    if kind == "synthetic_logistic":
        return make_synthetic_logistic(int(cfg["samples"]), int(cfg["dimension"]), int(cfg["seed"]))
    if kind == "convex_least_squares":
        return make_convex_least_squares(
            int(cfg["samples"]), int(cfg["dimension"]), int(cfg["rank"]), int(cfg["seed"])
        )
    raise ParameterError(f"unknown problem kind {kind!r}; expected one of {PROBLEM_KINDS}")


def problem_to_config(oracle: GradientOracle) -> dict:
    """Round-trippable description of a generated problem."""
    ex = oracle.extras
    if oracle.name == "cycle_quadratic":
        return {
            "kind": oracle.name,
            "dimension": oracle.dimension,
            "lambda_reg": ex["lambda_reg"],
            "seed": ex["seed"],
        }
    if oracle.name == "synthetic_logistic":
        return {
            "kind": oracle.name,
            "samples": ex["n_samples"],
            "dimension": oracle.dimension,
            "seed": ex["seed"],
        }
    if oracle.name == "convex_least_squares":
        return {
            "kind": oracle.name,
            "samples": ex["n_samples"],
            "dimension": oracle.dimension,
            "rank": ex["rank"],
            "seed": ex["seed"],
        }
    raise ParameterError(f"oracle {oracle.name!r} is not a generated problem")


def noise_from_config(cfg: dict) -> Optional[NoiseInjector]:
    """Build a noise injector from a flat description (kind "none" gives None)."""
    kind = cfg.get("kind", "none")
    if kind == "none":
        return None
    if kind == "additive":
        return NoiseInjector("additive", sigma2=float(cfg.get("sigma2", 0.0)), eta2=float(cfg.get("eta2", 0.0)))
    if kind == "minibatch":
        return NoiseInjector("minibatch", batch_size=int(cfg["batch_size"]))
    raise ParameterError(f"unknown noise kind {kind!r}")
