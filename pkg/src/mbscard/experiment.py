"""Parameter sweeps over the simulated schemes and calibration of the frame length ell."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .analysis import EnergyParams
from .core import AccuracySpec, make_rng
from .engine import SCHEMES, run_replicate
from .scenario import ScenarioConfig, build_model
from .srcm import compute_pI, final_estimate, pbar, probe_and_search_rows, rough_estimate

SWEEP_VARS = ("q", "D", "T", "epsilon", "R")
DEFAULT_N_RANGE = (100, 200, 500, 1000, 2000, 5000)
ELL_TABLE = "ell_table.json"


# --------------------------------------------------------------------------- calibration


def _single_stop_hits(
    n: int, accuracy: AccuracySpec, seed: int, replicates: int
) -> np.ndarray:
    """Hit indicators |n^ - n| <= eps n of single-stop runs with n active nodes.

    Draws are keyed by (seed, n, replicate) only, so every candidate ell sees
    the same phase-1 vectors and the same per-node uniforms.
    """
    W, t, ell = accuracy.W, accuracy.t, accuracy.ell
    rng = make_rng(seed, n)
    # a slot is busy iff some node's coin lands; equivalent in law to per-node coins
    busy_p = 1.0 - (1.0 - pbar(t)) ** n
    Y = rng.random((replicates, W, t)) < busy_p
    v = probe_and_search_rows(Y.reshape(-1, t), t).reshape(replicates, W)
    u = rng.random((replicates, n))
    pos = rng.random((replicates, n))
    hits = np.zeros(replicates, dtype=bool)
    for r in range(replicates):
        prm = compute_pI(rough_estimate(v[r]), ell, min_exponent=accuracy.min_exponent)
        send = u[r] < prm.rate
        occupied = np.unique((pos[r, send] * ell).astype(np.int64)).size
        rate = prm.p if accuracy.estimator_rate == "p" else prm.rate
        est = final_estimate(ell - occupied, ell, rate)
        hits[r] = abs(est - n) <= accuracy.epsilon * n
    return hits


def hit_rates(accuracy: AccuracySpec, n_range: Sequence[int], seed: int, replicates: int) -> dict[int, float]:
    return {int(n): float(_single_stop_hits(int(n), accuracy, seed, replicates).mean()) for n in n_range}


@dataclass
class Calibration:
    epsilon: float
    delta: float
    ell: int
    n_range: tuple[int, ...]
    replicates: int
    seed: int
    hit_rates: dict[int, float]
    history: list[tuple[int, float]] = field(default_factory=list)

    estimator_rate: str = "p"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hit_rates"] = {str(k): v for k, v in self.hit_rates.items()}
        d["history"] = [list(h) for h in self.history]
        return d


def calibrate_ell(
    epsilon: float,
    delta: float,
    n_range: Sequence[int] = DEFAULT_N_RANGE,
    *,
    seed: int = 2024,
    replicates: int = 1000,
    base: AccuracySpec | None = None,
    ell_start: int = 64,
    ell_max: int = 1 << 16,
) -> Calibration:
    """Smallest ell whose empirical hit rate reaches 1 - delta at every n (doubling, then bisection)."""
    if not (0 < epsilon < 1 and 0 < delta < 1):
        raise ValueError("epsilon and delta must lie in (0, 1)")
    base = (base or AccuracySpec()).replace(epsilon=epsilon, delta=delta)
    target = 1.0 - delta
    history: list[tuple[int, float]] = []
    cache: dict[int, dict[int, float]] = {}

    def worst(ell: int) -> float:
        if ell not in cache:
            cache[ell] = hit_rates(base.replace(ell=ell), n_range, seed, replicates)
            history.append((ell, min(cache[ell].values())))
        return min(cache[ell].values())

    lo, hi = 0, ell_start
    while worst(hi) < target:
        lo, hi = hi, hi * 2
        if hi > ell_max:
            raise ValueError(f"epsilon={epsilon} unreachable with ell <= {ell_max}")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if worst(mid) >= target:
            hi = mid
        else:
            lo = mid
    return Calibration(
        epsilon, delta, hi, tuple(int(n) for n in n_range), replicates, seed, cache[hi], history, base.estimator_rate
    )


def load_ell_table(path: str | Path | None = None) -> list[dict]:
    if path is None:
        text = resources.files("mbscard").joinpath("data").joinpath(ELL_TABLE).read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)["entries"]


def save_ell_table(entries: list[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps({"entries": entries}, indent=2) + "\n")


def lookup_ell(
    epsilon: float, delta: float, estimator_rate: str = "p", path: str | Path | None = None
) -> int:
    for e in load_ell_table(path):
        if (
            math.isclose(e["epsilon"], epsilon)
            and math.isclose(e["delta"], delta)
            and e.get("estimator_rate", "p") == estimator_rate
        ):
            return int(e["ell"])
    raise KeyError(f"no calibrated ell for epsilon={epsilon}, delta={delta}, estimator_rate={estimator_rate}")


def calibrated_accuracy(epsilon: float = 0.03, delta: float = 0.2, **kw) -> AccuracySpec:
    """Default accuracy settings with ell taken from the shipped calibration table."""
    rate = kw.get("estimator_rate", "p")
    return AccuracySpec(epsilon=epsilon, delta=delta, ell=lookup_ell(epsilon, delta, rate), **kw)


# --------------------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    scenario: ScenarioConfig
    sweep: str
    values: tuple[float, ...]
    schemes: tuple[str, ...] = SCHEMES
    replicates: int = 500
    seed: int = 1
    accuracy: dict = field(default_factory=dict)  # AccuracySpec overrides; "ell" may be omitted
    nested_bp: str = "count"
    energy: dict = field(default_factory=dict)  # EnergyParams.uniform keyword overrides

    def __post_init__(self) -> None:
        if self.sweep not in SWEEP_VARS:
            raise ValueError(f"sweep must be one of {SWEEP_VARS}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.values:
            raise ValueError("need at least one sweep value")
        schemes = SCHEMES if "all" in self.schemes else self.schemes
        for s in schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        object.__setattr__(self, "schemes", tuple(schemes))
        for v in self.values:
            self._check_value(v)

    def _check_value(self, v: float) -> None:
        ok = {
            "q": 0.0 <= v <= 1.0,
            "D": v >= 0,
            "T": v >= 1 and float(v).is_integer(),
            "epsilon": 0.0 < v < 1.0,
            "R": v > 0,
        }[self.sweep]
        if not ok:
            raise ValueError(f"invalid {self.sweep} value {v}")

    def point(self, value: float) -> tuple[ScenarioConfig, AccuracySpec]:
        sc = self.scenario
        acc_kw = dict(self.accuracy)
        eps = acc_kw.pop("epsilon", 0.03)
        delta = acc_kw.pop("delta", 0.2)
        if self.sweep == "q":
            sc = sc.replace(q=float(value))
        elif self.sweep == "D":
            sc = sc.replace(D=float(value))
        elif self.sweep == "T":
            sc = sc.replace(T=int(value))
        elif self.sweep == "R":
            sc = sc.replace(radius=float(value))
        else:
            eps = float(value)
        if "ell" not in acc_kw:
            acc_kw["ell"] = lookup_ell(eps, delta, acc_kw.get("estimator_rate", "p"))
        return sc, AccuracySpec(epsilon=eps, delta=delta, **acc_kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        d["scenario"] = ScenarioConfig.from_dict(d["scenario"])
        d["values"] = tuple(d["values"])
        if "schemes" in d:
            d["schemes"] = tuple(d["schemes"])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ResultRow:
    scheme: str
    value: float
    mean_slots: float
    se_slots: float
    improvement_pct: float
    hit_rate: float
    min_type_hit_rate: float
    mean_rel_error: list[float]
    type_hit_rate: list[float]
    mean_node_energy: float
    saturated: int
    replicates: int
    ell: int

    CSV_FIELDS = (
        "scheme", "value", "mean_slots", "se_slots", "improvement_pct", "hit_rate", "min_type_hit_rate",
        "mean_rel_error", "type_hit_rate", "mean_node_energy", "saturated", "replicates", "ell",
    )

    def as_csv(self) -> list[str]:
        out = []
        for f in self.CSV_FIELDS:
            v = getattr(self, f)
            if isinstance(v, list):
                out.append(" ".join(f"{x:.6g}" for x in v))
            elif isinstance(v, float):
                out.append(f"{v:.6g}")
            else:
                out.append(str(v))
        return out


def run_experiment(
    spec: ExperimentSpec, *, progress: Callable[[str], None] | None = None
) -> list[ResultRow]:
    rows: list[ResultRow] = []
    for i, value in enumerate(spec.values):
        sc, acc = spec.point(value)
        energy = EnergyParams.uniform(sc.T, **spec.energy)
        slots = {s: [] for s in spec.schemes}
        hits = {s: [] for s in spec.schemes}
        rel = {s: [] for s in spec.schemes}
        eng = {s: [] for s in spec.schemes}
        sat = {s: 0 for s in spec.schemes}
        for r in range(spec.replicates):
            pop, _ = build_model(sc, make_rng(spec.seed, i, r, 0))
            res = run_replicate(
                pop, acc, make_rng(spec.seed, i, r, 1), schemes=spec.schemes, energy=energy, nested_bp=spec.nested_bp
            )
            n = res.truth.astype(float)
            for s, out in res.schemes.items():
                slots[s].append(out.slots)
                err = np.abs(out.estimates - n)
                hits[s].append(err <= acc.epsilon * n)
                rel[s].append(np.divide(err, n, out=np.zeros_like(err), where=n > 0))
                eng[s].append(out.energy.sum() / max(pop.N, 1))
                sat[s] += int(out.saturated.sum())
        base = float(np.mean(slots["trep"])) if "trep" in slots else float("nan")
        for s in spec.schemes:
            sl = np.asarray(slots[s], dtype=float)
            h = np.asarray(hits[s])
            mean = float(sl.mean())
            rows.append(
                ResultRow(
                    scheme=s,
                    value=float(value),
                    mean_slots=mean,
                    se_slots=float(sl.std(ddof=1) / math.sqrt(len(sl))) if len(sl) > 1 else 0.0,
                    improvement_pct=100.0 * (base - mean) / base if base == base else float("nan"),
                    hit_rate=float(h.mean()),
                    min_type_hit_rate=float(h.mean(axis=0).min()),
                    mean_rel_error=[float(x) for x in np.mean(rel[s], axis=0)],
                    type_hit_rate=[float(x) for x in h.mean(axis=0)],
                    mean_node_energy=float(np.mean(eng[s])),
                    saturated=sat[s],
                    replicates=spec.replicates,
                    ell=acc.ell,
                )
            )
        if progress:
            progress(f"{spec.sweep}={value}: done")
    order = {s: k for k, s in enumerate(SCHEMES)}
    rows.sort(key=lambda row: (order[row.scheme], row.value))
    return rows


def mean_improvement(rows: Sequence[ResultRow], scheme: str) -> float:
    vals = [r.improvement_pct for r in rows if r.scheme == scheme]
    return float(np.mean(vals))
