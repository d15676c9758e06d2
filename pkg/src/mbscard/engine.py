"""Multi-stop driver shared by the baseline and the two joint schemes.

Every node keeps one set of random draws for the whole tour: its phase-1 coin
matrix (trials x slots), its phase-2 block and a uniform ``u``.  At stop m it
transmits in phase 2 iff ``u < 2^-I_{b,m}``.  A node seen from several stops
therefore contributes one ball, not several, and the cumulative patterns are
the OR over stops.  All schemes consume identical draws, so their bit patterns
coincide whenever their decoders are exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import EnergyParams
from .core import AccuracySpec, PhaseTwoResult
from .hsrc_m1 import three_step
from .hsrc_m2 import two_step
from .scenario import Population
from .srcm import compute_pI, draw_trial_bits, final_estimate, probe_and_search_rows, rough_estimate

SCHEMES = ("trep", "hsrc_m1", "hsrc_m2")


@dataclass
class NodeDraws:
    trial_bits: np.ndarray  # (N, W, t)
    block: np.ndarray  # (N,)
    u: np.ndarray  # (N,)

    @classmethod
    def draw(cls, n_nodes: int, accuracy: AccuracySpec, rng: np.random.Generator) -> "NodeDraws":
        bits = draw_trial_bits(n_nodes, accuracy.t, rng, trials=accuracy.W)
        block = rng.integers(0, accuracy.ell, size=n_nodes)
        u = rng.random(n_nodes)
        return cls(bits, block, u)


@dataclass
class StopRecord:
    stop: int
    n_tilde: np.ndarray
    p: np.ndarray
    I: np.ndarray
    in_range: np.ndarray
    transmitters: np.ndarray
    slots: dict[str, dict[str, int]]
    stats: dict[str, dict[str, int]]


@dataclass
class SchemeResult:
    scheme: str
    estimates: np.ndarray
    saturated: np.ndarray
    X: np.ndarray
    slots: int
    slots_per_stop: list[int]
    phase2_slots_per_stop: list[int]
    energy: np.ndarray  # (T,) summed over all nodes of each type
    energy_parts: dict[str, np.ndarray] = field(default_factory=dict)

    def trace(self, records: list[StopRecord]) -> list[dict]:
        return [
            {
                "stop": r.stop + 1,
                "slots": r.slots[self.scheme],
                "stats": r.stats.get(self.scheme, {}),
                "n_tilde": [round(float(x), 3) for x in r.n_tilde],
                "I": [int(x) for x in r.I],
            }
            for r in records
        ]


@dataclass
class ReplicateResult:
    truth: np.ndarray
    schemes: dict[str, SchemeResult]
    records: list[StopRecord]


def _phase2(scheme: str, counts: np.ndarray, accuracy: AccuracySpec, nested_bp: str) -> PhaseTwoResult:
    T, ell = counts.shape
    if scheme == "trep" or T == 1:
        z = np.zeros((T, ell), dtype=np.int64)
        return PhaseTwoResult(counts >= 1, {"frames": T * ell}, z, np.ones((T, ell), np.int64), z.copy(), {})
    if scheme == "hsrc_m1":
        return three_step(counts, accuracy.slot_width_bits)
    if scheme == "hsrc_m2":
        return two_step(counts, accuracy.slot_width_bits, nested_bp=nested_bp)
    raise ValueError(f"unknown scheme {scheme!r}")


def run_replicate(
    population: Population,
    accuracy: AccuracySpec,
    rng: np.random.Generator,
    *,
    schemes=SCHEMES,
    energy: EnergyParams | None = None,
    nested_bp: str = "count",
    draws: NodeDraws | None = None,
) -> ReplicateResult:
    """Run every requested scheme over the full tour with shared node draws."""
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}")
    T, N, M = population.T, population.N, population.coverage.shape[1]
    W, t, ell = accuracy.W, accuracy.t, accuracy.ell
    energy = energy or EnergyParams.uniform(T)
    draws = draws or NodeDraws.draw(N, accuracy, rng)
    types0 = population.types - 1
    p1_tx = draws.trial_bits.reshape(N, -1).sum(axis=1)

    Y = np.zeros((T, W, t), dtype=bool)
    X = {s: np.zeros((T, ell), dtype=bool) for s in schemes}
    slots_per_stop = {s: [] for s in schemes}
    p2_per_stop = {s: [] for s in schemes}
    e_parts = {s: {k: np.zeros(T) for k in ("p1_tx", "p1_idle", "p2_tx", "p2_rx", "p2_idle")} for s in schemes}
    node_count = np.bincount(types0, minlength=T).astype(float)
    records: list[StopRecord] = []
    gi, gr = np.asarray(energy.gamma_idle), np.asarray(energy.gamma_rx)
    ga, gb = np.asarray(energy.gamma_alpha), np.asarray(energy.gamma_beta)

    p_last = np.ones(T)
    I_last = np.zeros(T, dtype=np.int64)
    for m in range(M):
        here = population.active[:, m] & population.coverage[:, m]
        n_tilde = np.zeros(T)
        p = np.zeros(T)
        I = np.zeros(T, dtype=np.int64)
        for b in range(T):
            sel = here & (types0 == b)
            if sel.any():
                Y[b] |= draws.trial_bits[sel].any(axis=0)
            n_tilde[b] = rough_estimate(probe_and_search_rows(Y[b], t))
            prm = compute_pI(n_tilde[b], ell, min_exponent=accuracy.min_exponent)
            p[b], I[b] = prm.p, prm.I
        p_last, I_last = p, I
        sends = here & (draws.u < 2.0 ** -I[types0])
        counts = np.zeros((T, ell), dtype=np.int64)
        np.add.at(counts, (types0[sends], draws.block[sends]), 1)
        in_range = np.bincount(types0[here], minlength=T)

        # phase-1 energy is identical across schemes: each node is awake for its own type's trials
        tx1 = np.bincount(types0[here], weights=p1_tx[here], minlength=T)
        rec_slots, rec_stats = {}, {}
        for s in schemes:
            res = _phase2(s, counts, accuracy, nested_bp)
            X[s] |= res.X
            d2 = res.total_slots
            slots_per_stop[s].append(T * t * W + d2)
            p2_per_stop[s].append(d2)
            rec_slots[s] = dict(res.slots)
            rec_stats[s] = dict(res.stats)
            per = res.per_type_energy_slots(counts)
            ep = e_parts[s]
            ep["p1_tx"] += tx1 * energy.gamma_p1_tx
            ep["p1_idle"] += (node_count * t * W - tx1) * gi
            awake = ell if (s == "trep" or T == 1) else d2
            busy = per["tx_alpha"] + per["tx_beta"] + per["rx"]
            ep["p2_tx"] += per["tx_alpha"] * ga + per["tx_beta"] * gb
            ep["p2_rx"] += per["rx"] * gr
            ep["p2_idle"] += (node_count * awake - busy) * gi
        records.append(StopRecord(m, n_tilde, p, I, in_range, counts.sum(axis=1), rec_slots, rec_stats))

    truth = population.true_counts()
    rate = p_last if accuracy.estimator_rate == "p" else 2.0 ** -I_last.astype(float)
    out = {}
    for s in schemes:
        z = ell - X[s].sum(axis=1)
        est = np.array([final_estimate(int(z[b]), ell, float(rate[b])) for b in range(T)])
        parts = e_parts[s]
        out[s] = SchemeResult(
            s, est, z == 0, X[s], int(sum(slots_per_stop[s])), slots_per_stop[s], p2_per_stop[s],
            sum(parts.values()), parts,
        )
    return ReplicateResult(truth, out, records)


def run_scheme(scheme: str, population: Population, accuracy: AccuracySpec, rng=None, **kw) -> SchemeResult:
    """Single-scheme convenience wrapper around :func:`run_replicate`."""
    if rng is None:
        rng = np.random.default_rng(0)
    return run_replicate(population, accuracy, rng, schemes=(scheme,), **kw).schemes[scheme]
