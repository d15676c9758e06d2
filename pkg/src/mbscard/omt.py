"""Tour selection for the mobile base station: instance model, validator, greedy and exact solvers.

Stops are numbered 0..M with 0 the charging station; tours start and end at 0
and visit every interior stop at most once.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SECTIONS = ("stops", "costs", "coverage", "energy", "budget")
MAX_EXACT_STOPS = 10


@dataclass(frozen=True)
class TourInstance:
    """``cost[u, v]`` travel cost (inf = no link); ``coverage[k, m]`` and ``energy[k, m]`` per node and stop."""

    cost: np.ndarray  # (M+1, M+1)
    coverage: np.ndarray  # (N, M+1) bool
    energy: np.ndarray  # (N, M+1)
    budget: float

    def __post_init__(self) -> None:
        cost = np.asarray(self.cost, dtype=float)
        n_stops = cost.shape[0]
        cov = np.asarray(self.coverage, dtype=bool).reshape(-1, n_stops)
        eng = np.asarray(self.energy, dtype=float).reshape(-1, n_stops)
        if cost.ndim != 2 or cost.shape[1] != n_stops or n_stops < 2:
            raise ValueError("cost must be a square matrix over at least two stops")
        if cov.shape != eng.shape:
            raise ValueError("coverage and energy must have the same shape")
        if cov[:, 0].any():
            raise ValueError("no node may be covered at the charging station (stop 0)")
        if (eng < 0).any() or np.isnan(eng).any():
            raise ValueError("energies must be non-negative")
        off = ~np.eye(n_stops, dtype=bool)
        if (cost[off] < 0).any() or np.isnan(cost[off]).any():
            raise ValueError("costs must be non-negative (inf allowed)")
        if not self.budget >= 0:
            raise ValueError("budget must be non-negative")
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "coverage", cov)
        object.__setattr__(self, "energy", eng)

    @property
    def M(self) -> int:
        """Number of candidate stops, excluding the charging station."""
        return self.cost.shape[0] - 1

    @property
    def N(self) -> int:
        return self.coverage.shape[0]

    def stop_energy(self, m: int) -> float:
        """Energy spent by the nodes in range while the base station sits at stop m."""
        return float((self.energy[:, m] * self.coverage[:, m]).sum())

    def tour_cost(self, stops) -> float:
        seq = [0, *stops, 0]
        return float(sum(self.cost[a, b] for a, b in zip(seq, seq[1:])))

    # ------------------------------------------------------------ text format

    @classmethod
    def parse(cls, text: str) -> "TourInstance":
        """Read the sectioned text format; ``[stops]`` holds the count including stop 0."""
        body: dict[str, list[list[str]]] = {}
        current = None
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip().lower()
                if current not in SECTIONS:
                    raise ValueError(f"unknown section [{current}]")
                if current in body:
                    raise ValueError(f"duplicate section [{current}]")
                body[current] = []
                continue
            if current is None:
                raise ValueError("data before the first section header")
            body[current].append(line.replace(",", " ").split())
        missing = [s for s in ("stops", "costs", "budget") if s not in body]
        if missing:
            raise ValueError(f"missing section(s): {', '.join(missing)}")

        def numbers(rows, name):
            try:
                return [[float(x) for x in r] for r in rows]
            except ValueError as exc:
                raise ValueError(f"bad number in [{name}]: {exc}") from None

        n_stops = int(_scalar(body["stops"], "stops"))
        cost = np.array(numbers(body["costs"], "costs"))
        if cost.shape != (n_stops, n_stops):
            raise ValueError(f"[costs] must be {n_stops}x{n_stops}")
        cov_rows = numbers(body.get("coverage", []), "coverage")
        eng_rows = numbers(body.get("energy", []), "energy")
        if any(len(r) != n_stops for r in cov_rows + eng_rows):
            raise ValueError(f"[coverage] and [energy] rows need {n_stops} entries")
        if len(cov_rows) != len(eng_rows):
            raise ValueError("[coverage] and [energy] need one row per node")
        cov = np.array(cov_rows).reshape(-1, n_stops)
        if not np.isin(cov, (0, 1)).all():
            raise ValueError("[coverage] entries must be 0 or 1")
        budget = _scalar(body["budget"], "budget")
        return cls(cost, cov.astype(bool), np.array(eng_rows).reshape(-1, n_stops), budget)

    @classmethod
    def load(cls, path: str | Path) -> "TourInstance":
        return cls.parse(Path(path).read_text())

    def dumps(self) -> str:
        buf = io.StringIO()
        fmt = lambda x: "inf" if math.isinf(x) else f"{x:g}"  # noqa: E731
        buf.write(f"[stops]\n{self.M + 1}\n[costs]\n")
        for row in self.cost:
            buf.write(" ".join(fmt(x) for x in row) + "\n")
        buf.write("[coverage]\n")
        for row in self.coverage:
            buf.write(" ".join(str(int(x)) for x in row) + "\n")
        buf.write("[energy]\n")
        for row in self.energy:
            buf.write(" ".join(fmt(x) for x in row) + "\n")
        buf.write(f"[budget]\n{fmt(self.budget)}\n")
        return buf.getvalue()


def _scalar(rows: list[list[str]], name: str) -> float:
    if len(rows) != 1 or len(rows[0]) != 1:
        raise ValueError(f"[{name}] must hold exactly one value")
    try:
        return float(rows[0][0])
    except ValueError:
        raise ValueError(f"bad number in [{name}]") from None


@dataclass(frozen=True)
class Tour:
    stops: tuple[int, ...]  # interior stops in visiting order
    cost: float
    energy: float
    covered: frozenset[int]
    reason: str = ""

    @property
    def sequence(self) -> tuple[int, ...]:
        return (0, *self.stops, 0)

    @classmethod
    def build(cls, inst: TourInstance, stops, reason: str = "") -> "Tour":
        stops = tuple(int(s) for s in stops)
        covered = frozenset(int(k) for k in np.flatnonzero(inst.coverage[:, list(stops)].any(axis=1))) if stops else frozenset()
        # a stop listed twice is charged twice; validate() flags it anyway
        energy = sum(inst.stop_energy(m) for m in stops)
        return cls(stops, inst.tour_cost(stops), energy, covered, reason)


@dataclass
class Feasibility:
    violations: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations


def validate(inst: TourInstance, sequence) -> Feasibility:
    """Check a full stop sequence (starting and ending at 0) against every tour constraint."""
    seq = [int(s) for s in sequence]
    rep = Feasibility()
    endpoints_ok = len(seq) >= 2 and seq[0] == 0 and seq[-1] == 0
    if not endpoints_ok:
        rep.violations.append("endpoints: tour must start and end at stop 0")
    interior = seq[1:-1] if len(seq) >= 2 else seq
    bad = [s for s in interior if not 1 <= s <= inst.M]
    if bad:
        rep.violations.append(f"stops: unknown or charging-station stop(s) {bad} in the interior")
        interior = [s for s in interior if 1 <= s <= inst.M]
    if len(set(interior)) != len(interior):
        rep.violations.append("distinct: an interior stop is visited more than once")
    if not 1 <= len(interior) <= inst.M:
        rep.violations.append(f"length: number of interior stops must lie in 1..{inst.M}")
    energy = sum(inst.stop_energy(m) for m in interior)
    if energy > inst.budget:
        rep.violations.append(f"energy: {energy:g} exceeds budget {inst.budget:g}")
    covered = inst.coverage[:, interior].any(axis=1) if interior else np.zeros(inst.N, bool)
    if not covered.all():
        rep.violations.append(f"coverage: {int((~covered).sum())} node(s) never covered")
    if endpoints_ok and not bad and math.isinf(inst.tour_cost(interior)):
        rep.violations.append("links: tour uses a missing link")
    return rep


def greedy_tour(inst: TourInstance) -> Tour:
    """Nearest-unvisited-stop tour; stops once every node is covered or the energy budget is passed."""
    everyone = inst.N
    covered = np.zeros(inst.N, dtype=bool)
    spent = 0.0
    current = 0
    unvisited = list(range(1, inst.M + 1))
    stops: list[int] = []
    while covered.sum() != everyone and spent <= inst.budget:
        if not unvisited:
            break
        costs = inst.cost[current, unvisited]
        nxt = unvisited[int(np.argmin(costs))]  # argmin returns the first, i.e. lowest index
        covered |= inst.coverage[:, nxt]
        spent += inst.stop_energy(nxt)
        unvisited.remove(nxt)
        stops.append(nxt)
        current = nxt
    if covered.sum() == everyone:
        reason = "covered"
    elif spent > inst.budget:
        reason = "budget_exceeded"
    else:
        reason = "stops_exhausted"
    return Tour.build(inst, stops, reason)


def exact_tour(inst: TourInstance, max_stops: int = MAX_EXACT_STOPS) -> Tour | None:
    """Cheapest feasible tour (lexicographically smallest among ties), or None if infeasible.

    Held-Karp over every subset of stops: ``best[S][j]`` is the cheapest path
    0 -> (all of S) -> j, stored with its stop sequence so ties resolve to the
    lexicographically smallest order.
    """
    M = inst.M
    if M > max_stops:
        raise ValueError(f"instance has {M} stops; exact solver is limited to {max_stops}")
    c = inst.cost
    full = 1 << M
    node_bits = [0] * (M + 1)
    for m in range(1, M + 1):
        node_bits[m] = sum(1 << int(k) for k in np.flatnonzero(inst.coverage[:, m]))
    everyone = (1 << inst.N) - 1
    stop_e = [0.0] + [inst.stop_energy(m) for m in range(1, M + 1)]

    best: list[dict[int, tuple[float, tuple[int, ...]]]] = [dict() for _ in range(full)]
    for j in range(M):
        best[1 << j][j] = (float(c[0, j + 1]), (j + 1,))
    answer: tuple[float, tuple[int, ...]] | None = None
    for S in range(1, full):
        members = [j for j in range(M) if S >> j & 1]
        cov = 0
        for j in members:
            cov |= node_bits[j + 1]
        feasible = cov == everyone and sum(stop_e[j + 1] for j in members) <= inst.budget
        for j, (cost, path) in best[S].items():
            if feasible:
                cand = (cost + float(c[j + 1, 0]), path)
                if not math.isinf(cand[0]) and (answer is None or cand < answer):
                    answer = cand
            for k in range(M):
                if S >> k & 1:
                    continue
                cand = (cost + float(c[j + 1, k + 1]), path + (k + 1,))
                cur = best[S | 1 << k].get(k)
                if cur is None or cand < cur:
                    best[S | 1 << k][k] = cand
    if answer is None:
        return None
    return Tour.build(inst, answer[1], "optimal")


# ---------------------------------------------------------------- generators


def tsp_reduction(dist: np.ndarray) -> TourInstance:
    """OMT instance equivalent to a TSP on ``dist`` rooted at city 0.

    Every city other than 0 gets one private node seen only from it, nodes
    cost one unit of energy and the budget is unlimited, so feasible tours are
    exactly the Hamiltonian cycles through 0.
    """
    dist = np.asarray(dist, dtype=float)
    M = dist.shape[0] - 1
    cov = np.zeros((M, M + 1), dtype=bool)
    cov[np.arange(M), np.arange(1, M + 1)] = True
    return TourInstance(dist, cov, cov.astype(float), math.inf)


def random_instance(
    rng: np.random.Generator, M: int, N: int, *, p_cover: float = 0.4, budget: float | None = None,
    integer_costs: bool = True,
) -> TourInstance:
    """Random complete instance in which every node is seen from at least one stop."""
    pts = rng.uniform(0, 10, size=(M + 1, 2))
    cost = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    if integer_costs:
        cost = np.ceil(cost)
    np.fill_diagonal(cost, 0.0)
    cov = rng.random((N, M + 1)) < p_cover
    cov[:, 0] = False
    for k in np.flatnonzero(~cov.any(axis=1)):
        cov[k, rng.integers(1, M + 1)] = True
    energy = np.round(rng.uniform(0.5, 2.0, size=(N, M + 1)), 2)
    if budget is None:
        budget = float(rng.uniform(0.3, 1.0) * (energy * cov).sum())
    return TourInstance(cost, cov, energy, budget)
