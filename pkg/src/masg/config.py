"""Declarative experiment specifications.

An experiment file is INI-style text with four sections:

    [problem]
    kind = cycle_quadratic          ; cycle_quadratic | synthetic_logistic | convex_least_squares
    dimension = 100
    lambda_reg = 0.01               ; cycle_quadratic only
    samples = 2000                  ; logistic / least squares only
    rank = 25                       ; convex_least_squares only
    seed = 12345

    [noise]
    kind = additive                 ; additive | minibatch | none
    sigma2 = 1e-2                   ; additive only
    eta2 = 0.0                      ; additive only, optional
    batch_size = 50                 ; minibatch only

    [algorithms]                    ; one entry per algorithm, comma-separated key=value params
    m_asg = p=1, n1=default
    m_asg_star = delta=auto
    standard_gd =
    standard_asg =

    [run]
    budget = 1000
    seeds = 0:50                    ; half-open range, or a comma list like 3,5,8
    output = results.csv
    figures = true                  ; render a PNG next to the CSV

Unknown sections or keys are errors. Every run starts from the origin.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional


class SpecError(ValueError):
    """The experiment description is malformed or inconsistent."""


_PROBLEM_KEYS = {"kind", "dimension", "lambda_reg", "samples", "rank", "seed"}
_NOISE_KEYS = {"kind", "sigma2", "eta2", "batch_size"}
_RUN_KEYS = {"budget", "seeds", "output", "figures"}

ALGORITHM_NAMES = (
    "m_asg",
    "m_asg_star",
    "standard_gd",
    "standard_asg",
    "single_stage",
    "ac_sa",
    "m_asg_general",
    "convex_asg",
)

_ALGO_PARAM_KEYS = {
    "m_asg": {"p", "n1"},
    "m_asg_star": {"delta"},
    "standard_gd": set(),
    "standard_asg": set(),
    "single_stage": {"p"},
    "ac_sa": {"eta", "gamma"},
    "m_asg_general": {"p", "n1"},
    "convex_asg": set(),
}


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentSpec:
    problem: dict
    noise: dict
    algorithms: List[AlgorithmSpec]
    seeds: List[int]
    budget: int
    output: Optional[Path]
    figures: bool = True


def _check_keys(section: str, given, allowed) -> None:
    unknown = set(given) - allowed
    if unknown:
        raise SpecError(f"unknown keys in [{section}]: {sorted(unknown)}")


def _parse_seeds(text: str) -> List[int]:
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":")
        seeds = list(range(int(lo), int(hi)))
    else:
        seeds = [int(tok) for tok in text.split(",") if tok.strip()]
    if not seeds:
        raise SpecError("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise SpecError("seeds must be distinct")
    return seeds


def _parse_params(name: str, text: str) -> dict:
    params = {}
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "=" not in tok:
            raise SpecError(f"malformed parameter {tok!r} for algorithm {name}")
        key, val = (part.strip() for part in tok.split("=", 1))
        params[key] = val
    _check_keys(f"algorithms:{name}", params.keys(), _ALGO_PARAM_KEYS[name])
    return params


def parse_spec(text: str) -> ExperimentSpec:
    """Parse and validate an experiment description."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"cannot parse experiment file: {exc}") from exc

    expected = {"problem", "noise", "algorithms", "run"}
    present = set(cp.sections())
    if present - expected:
        raise SpecError(f"unknown sections: {sorted(present - expected)}")
    for required in ("problem", "algorithms", "run"):
        if required not in present:
            raise SpecError(f"missing [{required}] section")

    problem = dict(cp["problem"])
    _check_keys("problem", problem.keys(), _PROBLEM_KEYS)
    if "kind" not in problem:
        raise SpecError("[problem] needs a kind")

    noise = dict(cp["noise"]) if "noise" in present else {"kind": "none"}
    _check_keys("noise", noise.keys(), _NOISE_KEYS)

    algorithms = []
    for name, value in cp["algorithms"].items():
        if name not in ALGORITHM_NAMES:
            raise SpecError(f"unknown algorithm {name!r}; expected one of {ALGORITHM_NAMES}")
        algorithms.append(AlgorithmSpec(name, _parse_params(name, value)))
    if not algorithms:
        raise SpecError("at least one algorithm is required")

    run = dict(cp["run"])
    _check_keys("run", run.keys(), _RUN_KEYS)
    if "budget" not in run or "seeds" not in run:
        raise SpecError("[run] needs budget and seeds")
    budget = int(run["budget"])
    if budget < 1:
        raise SpecError("budget must be >= 1")
    seeds = _parse_seeds(run["seeds"])
    output = Path(run["output"]) if "output" in run else None
    figures = run.get("figures", "true").strip().lower() in ("1", "true", "yes", "on")
    return ExperimentSpec(problem, noise, algorithms, seeds, budget, output, figures)


def load_spec(path) -> ExperimentSpec:
    return parse_spec(Path(path).read_text())


def spec_echo_lines(spec: ExperimentSpec) -> List[str]:
    """Deterministic key=value lines describing the spec (for CSV headers)."""
    lines = []
    for key in sorted(spec.problem):
        lines.append(f"problem.{key} = {spec.problem[key]}")
    for key in sorted(spec.noise):
        lines.append(f"noise.{key} = {spec.noise[key]}")
    for algo in spec.algorithms:
        params = ", ".join(f"{k}={v}" for k, v in sorted(algo.params.items()))
        lines.append(f"algorithm.{algo.name} = {params}")
    lines.append(f"run.budget = {spec.budget}")
    lines.append(f"run.seeds = {','.join(str(s) for s in spec.seeds)}")
    return lines
