"""Deployment geometry, population draws and coverage for the simulated experiments."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

COVERAGE_RADIUS = math.pi / 4

MODEL_STOPS = {
    "I": ((0.75, 0.75), (0.25, 0.75), (0.25, 0.25), (0.75, 0.25)),
    "II": (
        (1.75, 0.75), (1.25, 0.75), (0.75, 0.75), (0.25, 0.75),
        (0.25, 0.25), (0.75, 0.25), (1.25, 0.25), (1.75, 0.25),
    ),
}
MODEL_REGION = {"I": (1.0, 1.0), "II": (2.0, 1.0)}
SCENARIO_MODEL = {1: "I", 2: "I", 3: "II"}


@dataclass(frozen=True)
class StopPlan:
    stops: np.ndarray  # (M, 2)
    radius: float
    order: tuple[int, ...]
    region: tuple[float, float]

    @property
    def M(self) -> int:
        return len(self.order)

    def ordered_stops(self) -> np.ndarray:
        return self.stops[list(self.order)]


@dataclass(frozen=True)
class ScenarioConfig:
    """Population recipe.

    ``scenario`` 1 fixes every type to ``D`` nodes active w.p. ``q``; scenarios
    2 and 3 draw per-type counts and activity probabilities around the means
    ``D`` and ``q``.  Scenarios 1 and 2 use the 1x1 square with four stops,
    scenario 3 the 2x1 rectangle with eight.  Explicit ``D_per_type`` /
    ``q_per_type`` override the draws.
    """

    scenario: int = 1
    T: int = 4
    D: float = 300
    q: float = 0.3
    radius: float = COVERAGE_RADIUS
    model: str | None = None
    D_per_type: tuple[int, ...] | None = None
    q_per_type: tuple[float, ...] | None = None
    activity: str = "persistent"

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIO_MODEL:
            raise ValueError("scenario must be 1, 2 or 3")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.D < 0 or not 0.0 <= self.q <= 1.0:
            raise ValueError("need D >= 0 and q in [0, 1]")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.model is not None and self.model not in MODEL_STOPS:
            raise ValueError("model must be 'I' or 'II'")
        if self.activity not in ("persistent", "per_stop"):
            raise ValueError("activity must be 'persistent' or 'per_stop'")
        for name, vals in (("D_per_type", self.D_per_type), ("q_per_type", self.q_per_type)):
            if vals is not None and len(vals) != self.T:
                raise ValueError(f"{name} needs {self.T} entries")
        if self.D_per_type is not None and min(self.D_per_type) < 0:
            raise ValueError("D_per_type entries must be >= 0")
        if self.q_per_type is not None and not all(0.0 <= x <= 1.0 for x in self.q_per_type):
            raise ValueError("q_per_type entries must lie in [0, 1]")

    @property
    def network_model(self) -> str:
        return self.model or SCENARIO_MODEL[self.scenario]

    def replace(self, **kw) -> "ScenarioConfig":
        from dataclasses import replace

        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        for k in ("D_per_type", "q_per_type"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class Population:
    types: np.ndarray  # (N,) 1-based type index
    xy: np.ndarray  # (N, 2)
    active: np.ndarray  # (N, M) activity at each stop
    D: np.ndarray  # (T,) node counts
    q: np.ndarray  # (T,) activity probabilities
    coverage: np.ndarray = field(default=None)  # (N, M) in range of each stop

    @property
    def T(self) -> int:
        return len(self.D)

    @property
    def N(self) -> int:
        return len(self.types)

    def true_counts(self) -> np.ndarray:
        """n_b: distinct type-b nodes that were active and in range at some stop."""
        seen = (self.active & self.coverage).any(axis=1)
        return np.bincount(self.types[seen] - 1, minlength=self.T)


def stop_plan(model: str, radius: float = COVERAGE_RADIUS) -> StopPlan:
    stops = np.array(MODEL_STOPS[model], dtype=float)
    return StopPlan(stops, radius, tuple(range(len(stops))), MODEL_REGION[model])


def draw_type_parameters(config: ScenarioConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-type node counts D_b and activity probabilities q_b."""
    T = config.T
    if config.scenario == 1:
        D = np.full(T, int(round(config.D)))
        q = np.full(T, float(config.q))
    else:
        lo, hi = math.ceil(config.D / 2), math.floor(3 * config.D / 2)
        D = rng.integers(lo, hi + 1, size=T)
        w = min(config.q, 1.0 - config.q)
        q = rng.uniform(config.q - w, config.q + w, size=T)
    if config.D_per_type is not None:
        D = np.array(config.D_per_type, dtype=np.int64)
    if config.q_per_type is not None:
        q = np.array(config.q_per_type, dtype=float)
    return D.astype(np.int64), q


def coverage_matrix(xy: np.ndarray, plan: StopPlan) -> np.ndarray:
    """(N, M) membership of each node in each stop's disk, stops in visiting order."""
    d = np.linalg.norm(xy[:, None, :] - plan.ordered_stops()[None, :, :], axis=2)
    return d <= plan.radius


def place_nodes(n: int, plan: StopPlan, rng: np.random.Generator, *, max_rounds: int = 1000) -> np.ndarray:
    """Uniform positions in the region, redrawn until every node is covered by some stop."""
    w, h = plan.region
    xy = rng.uniform((0.0, 0.0), (w, h), size=(n, 2))
    for _ in range(max_rounds):
        bad = ~coverage_matrix(xy, plan).any(axis=1)
        if not bad.any():
            return xy
        xy[bad] = rng.uniform((0.0, 0.0), (w, h), size=(int(bad.sum()), 2))
    raise RuntimeError("could not place nodes inside the stops' coverage")


def draw_population(config: ScenarioConfig, rng: np.random.Generator, plan: StopPlan | None = None) -> Population:
    plan = plan or stop_plan(config.network_model, config.radius)
    D, q = draw_type_parameters(config, rng)
    types = np.repeat(np.arange(1, config.T + 1), D)
    xy = place_nodes(len(types), plan, rng)
    qn = q[types - 1]
    if config.activity == "persistent":
        active = np.repeat((rng.random(len(types)) < qn)[:, None], plan.M, axis=1)
    else:
        active = rng.random((len(types), plan.M)) < qn[:, None]
    pop = Population(types, xy, active, D, q)
    pop.coverage = coverage_sets(pop, plan)
    return pop


def build_model(config: ScenarioConfig, rng: np.random.Generator) -> tuple[Population, StopPlan]:
    plan = stop_plan(config.network_model, config.radius)
    return draw_population(config, rng, plan), plan


def coverage_sets(population: Population, plan: StopPlan) -> np.ndarray:
    cov = coverage_matrix(population.xy, plan)
    if not cov.any(axis=1).all():
        raise ValueError("some nodes are outside every stop's coverage")
    return cov


def in_range_counts(population: Population) -> np.ndarray:
    """(T, M) active nodes of each type in range at each stop."""
    hit = population.active & population.coverage
    T, M = population.T, hit.shape[1]
    out = np.zeros((T, M), dtype=np.int64)
    for b in range(T):
        out[b] = hit[population.types == b + 1].sum(axis=0)
    return out


def cumulative_counts(population: Population) -> np.ndarray:
    """(T, M) distinct active type-b nodes seen over stops 1..m."""
    hit = np.cumsum(population.active & population.coverage, axis=1) > 0
    T = population.T
    return np.stack([hit[population.types == b + 1].sum(axis=0) for b in range(T)])


def dump_csv(population: Population, plan: StopPlan) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["kind", "id", "type", "x", "y", "active_any", "stops_in_range"])
    for m, (x, y) in enumerate(plan.ordered_stops()):
        w.writerow(["stop", m + 1, "", f"{x:.6f}", f"{y:.6f}", "", ""])
    for k in range(population.N):
        stops = " ".join(str(m + 1) for m in np.flatnonzero(population.coverage[k]))
        w.writerow(
            ["node", k, int(population.types[k]), f"{population.xy[k, 0]:.6f}", f"{population.xy[k, 1]:.6f}",
             int(population.active[k].any()), stops]
        )
    return buf.getvalue()
