"""Experiment configuration (TOML).

See ``docs/config.md`` for the frozen schema.  Every key is optional; the
defaults reproduce the rendezvous sweep on ``[-1, 1]^2``.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .core import BoxDomain
from .engine import ScheduleParams, initial_state
from .errors import ConfigError, DPDOptError
from .graphs import GraphSchedule
from .problem import make_rendezvous, problem_from_anchors
from .rng import RandomStream

PAPER_EPSILONS = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)
_X0_STREAM = 3


@dataclass(frozen=True)
class ProblemSpec:
    dimension: int = 2
    agents: int = 5
    lower: tuple = (-1.0, -1.0)
    upper: tuple = (1.0, 1.0)
    anchor_seed: int = 7
    anchors: tuple | None = None
    x0: object = "anchors"


@dataclass(frozen=True)
class GraphSpec:
    family: str = "ring"
    seed: int = 0
    extra_edge_probability: float = 0.3


@dataclass(frozen=True)
class VerifySpec:
    pairs: int = 10
    trials: int = 1000
    rounds: int = 100
    sequences: int = 20


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    graph: GraphSpec = field(default_factory=GraphSpec)
    epsilons: tuple = PAPER_EPSILONS
    trials: int = 500
    rounds: object = "auto"
    min_rounds: int = 50
    round_tolerance: float = 1e-6
    tuning: str = "auto"
    params: dict = field(default_factory=lambda: {"epsilon": 1.0, "c": 0.1, "q": 0.5, "p": 0.8})
    tuning_starts: int = 10
    tuning_passes: int = 20
    verify: VerifySpec = field(default_factory=VerifySpec)
    output: str = "out"

    def __post_init__(self):
        if not self.epsilons or any(not e > 0 for e in self.epsilons):
            raise ConfigError("epsilons must be a non-empty list of positive numbers")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.tuning not in ("auto", "fixed"):
            raise ConfigError("tuning must be 'auto' or 'fixed'")
        if not (self.rounds == "auto" or (isinstance(self.rounds, int) and self.rounds >= 1)):
            raise ConfigError("rounds must be 'auto' or a positive integer")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        self.base_params()

    def base_params(self) -> ScheduleParams:
        try:
            return ScheduleParams(**{k: float(self.params[k]) for k in ("epsilon", "c", "q", "p")})
        except KeyError as exc:
            raise ConfigError(f"[params] is missing {exc.args[0]!r}") from None
        except DPDOptError as exc:
            raise ConfigError(f"[params]: {exc}") from None

    def with_overrides(self, seed=None, trials=None, output=None) -> "ExperimentConfig":
        kw = {}
        if seed is not None:
            kw["seed"] = seed
        if trials is not None:
            kw["trials"] = trials
        if output is not None:
            kw["output"] = str(output)
        return replace(self, **kw) if kw else self

    def build_problem(self):
        ps, gs = self.problem, self.graph
        try:
            domain = BoxDomain(np.asarray(ps.lower, float), np.asarray(ps.upper, float))
            graph = GraphSchedule(gs.family, ps.agents, gs.seed, gs.extra_edge_probability)
            if ps.anchors is not None:
                problem = problem_from_anchors(np.asarray(ps.anchors, float), domain, graph)
            else:
                problem = make_rendezvous(ps.dimension, ps.agents, domain, ps.anchor_seed, graph)
        except DPDOptError as exc:
            raise ConfigError(f"invalid problem description: {exc}") from None
        if problem.n != ps.dimension:
            raise ConfigError("problem.dimension does not match the bounds")
        return problem

    def initial_state(self, problem):
        x0 = self.problem.x0
        rng = RandomStream(self.problem.anchor_seed, _X0_STREAM) if x0 == "uniform" else None
        try:
            return initial_state(problem, x0 if isinstance(x0, str) else np.asarray(x0, float), rng)
        except DPDOptError as exc:
            raise ConfigError(f"invalid x0: {exc}") from None

    def to_dict(self, include_output=True) -> dict:
        d = asdict(self)
        d["epsilons"] = list(self.epsilons)
        if not include_output:
            del d["output"]
        return _jsonable(d)

    def digest(self) -> str:
        """SHA-256 of the experiment definition; the output location is excluded."""
        blob = json.dumps(self.to_dict(include_output=False), sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _tupled(v):
    if isinstance(v, list):
        return tuple(_tupled(x) for x in v)
    return v


_TOP_KEYS = {"seed", "output", "problem", "graph", "experiment", "params", "tuning", "verify"}


def config_from_dict(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        problem = ProblemSpec(**{k: _tupled(v) for k, v in raw.get("problem", {}).items()})
        graph = GraphSpec(**raw.get("graph", {}))
        verify = VerifySpec(**raw.get("verify", {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    exp = dict(raw.get("experiment", {}))
    tun = dict(raw.get("tuning", {}))
    kw = {}
    for src, dst in (("epsilons", "epsilons"), ("trials", "trials"), ("rounds", "rounds"),
                     ("min_rounds", "min_rounds"), ("round_tolerance", "round_tolerance")):
        if src in exp:
            kw[dst] = exp.pop(src)
    if exp:
        raise ConfigError(f"unknown [experiment] keys: {sorted(exp)}")
    for src, dst in (("policy", "tuning"), ("starts", "tuning_starts"), ("passes", "tuning_passes")):
        if src in tun:
            kw[dst] = tun.pop(src)
    if tun:
        raise ConfigError(f"unknown [tuning] keys: {sorted(tun)}")
    if "epsilons" in kw:
        kw["epsilons"] = tuple(float(e) for e in kw["epsilons"])
    params = {"epsilon": 1.0, "c": 0.1, "q": 0.5, "p": 0.8}
    params.update(raw.get("params", {}))
    return ExperimentConfig(
        seed=int(raw.get("seed", 0)), problem=problem, graph=graph, params=params,
        verify=verify, output=str(raw.get("output", "out")), **kw,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)
