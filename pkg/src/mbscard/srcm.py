"""Homogeneous single-type counting: rough estimator (phase 1) and balls-and-bins refiner (phase 2)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ROUGH_SCALE = 0.794
LOAD_FACTOR = 1.6
MAX_EXPONENT = 64


def majority_success(W: int, delta: float) -> float:
    """P(at least floor((W+1)/2) of W trials succeed), each succeeding w.p. 1 - delta."""
    lo = (W + 1) // 2
    q = 1.0 - delta
    return sum(math.comb(W, i) * q**i * delta ** (W - i) for i in range(lo, W + 1))


def select_W(delta: float, *, max_W: int = 10_000) -> int:
    """Smallest number of rough-estimation trials W whose majority succeeds w.p. >= 1 - delta.

    Note that W = 1 always meets this bound with equality, so the scan
    returns 1 for every delta; the operational default W = 30 lives in
    :class:`~mbscard.core.AccuracySpec`.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    target = 1.0 - delta
    for W in range(1, max_W + 1):
        # tiny slack so that exact equality survives float round-off
        if majority_success(W, delta) >= target - 1e-12:
            return W
    raise ValueError(f"no W <= {max_W} satisfies the bound for delta={delta}")


def pbar(t: int) -> np.ndarray:
    """Per-slot transmit probabilities of a phase-1 trial of length t (index 0 is slot 1)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    i = np.arange(1, t + 1, dtype=float)
    p = 2.0**-i
    p[-1] = 2.0 ** -(t - 1)
    return p


def draw_trial_bits(n_nodes: int, t: int, rng: np.random.Generator, trials: int = 1) -> np.ndarray:
    """Per-node phase-1 coins: a (n_nodes, trials, t) boolean array of transmit decisions."""
    return rng.random((n_nodes, trials, t)) < pbar(t)


def phase1_trial(active_ids, t: int, rng: np.random.Generator) -> np.ndarray:
    """One phase-1 trial; returns the length-t slot-busy vector s."""
    n = len(active_ids) if not isinstance(active_ids, (int, np.integer)) else int(active_ids)
    if n == 0:
        return np.zeros(t, dtype=bool)
    return draw_trial_bits(n, t, rng)[:, 0, :].any(axis=0)


def probe_and_search(Y, t: int | None = None) -> int:
    """Largest busy slot index located by doubling probes followed by a binary search.

    Probes slots 1, 2, 4, ..., t.  If every probe is busy the result is t; if
    slot 1 is idle it is 0.  Otherwise the search runs between the last busy
    probe and the first idle one.
    """
    Y = np.asarray(Y, dtype=bool)
    t = len(Y) if t is None else t
    return int(probe_and_search_rows(Y[None, :], t)[0])


def probe_and_search_rows(Y: np.ndarray, t: int) -> np.ndarray:
    """Vectorised :func:`probe_and_search` over the rows of a (rows, t) array."""
    Y = np.asarray(Y, dtype=bool)
    if t < 1 or t & (t - 1):
        raise ValueError(f"t must be a power of two, got {t}")
    if Y.shape[-1] != t:
        raise ValueError(f"bit vectors must have length {t}")
    rows = Y.shape[0]
    v = np.full(rows, t, dtype=np.int64)
    lo = np.zeros(rows, dtype=np.int64)  # last busy probe (1-based), 0 = none yet
    hi = np.zeros(rows, dtype=np.int64)  # first idle probe, 0 = not found
    pos = 1
    while pos <= t:
        undecided = hi == 0
        idle = undecided & ~Y[:, pos - 1]
        busy = undecided & Y[:, pos - 1]
        hi[idle] = pos
        lo[busy] = pos
        pos *= 2
    found = hi > 0
    v[found & (hi == 1)] = 0
    search = found & (hi > 1)
    # bisection invariant: Y[lo] busy, Y[hi] idle
    while True:
        active = search & (hi - lo > 1)
        if not active.any():
            break
        mid = (lo + hi) // 2
        bit = Y[np.arange(rows), np.clip(mid - 1, 0, t - 1)]
        go_up = active & bit
        go_down = active & ~bit
        lo[go_up] = mid[go_up]
        hi[go_down] = mid[go_down]
    v[search] = lo[search]
    return v


def rough_estimate(v) -> float:
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("need at least one trial")
    return ROUGH_SCALE * 2.0 ** (v.sum() / v.size)


@dataclass(frozen=True)
class Phase2Params:
    p: float
    I: int

    @property
    def rate(self) -> float:
        """Per-node transmit probability actually used, 2^-I."""
        return 2.0**-self.I


def compute_pI(
    n_tilde: float, ell: int, *, min_exponent: int = 1, max_exponent: int = MAX_EXPONENT
) -> Phase2Params:
    """Target rate p = min(1, 1.6 ell / n~) and the nearest power-of-two exponent.

    Ties go to the smaller exponent.  ``min_exponent=1`` scans j >= 1 as in the
    classic protocol; ``min_exponent=0`` also allows full-rate transmission.
    """
    if n_tilde <= 0:
        raise ValueError("n_tilde must be positive")
    if ell < 1:
        raise ValueError("ell must be >= 1")
    p = min(1.0, LOAD_FACTOR * ell / n_tilde)
    best_j, best_gap = min_exponent, abs(2.0**-min_exponent - p)
    for j in range(min_exponent + 1, max_exponent + 1):
        gap = abs(2.0**-j - p)
        if gap < best_gap:
            best_j, best_gap = j, gap
    return Phase2Params(p=p, I=best_j)


def phase2_trial(
    n_active: int,
    ell: int,
    I: int,
    rng: np.random.Generator,
    prev: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One balls-and-bins frame.

    Returns ``(row, counts)``: the bit row OR-ed with ``prev`` and the per-slot
    transmitter counts of this frame.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    choice = rng.integers(0, ell, size=n_active)
    sends = rng.random(n_active) < 2.0**-I
    counts = np.bincount(choice[sends], minlength=ell)
    row = counts > 0
    if prev is not None:
        row = np.asarray(prev, dtype=bool) | row
    return row, counts


def saturation_estimate(ell: int, p_M: float) -> float:
    return 2.0 * LOAD_FACTOR * ell / p_M


def final_estimate(z: int, ell: int, p_M: float) -> float:
    """Empty-slot estimator ln(z/ell) / ln(1 - p_M/ell); z = 0 yields the saturation sentinel."""
    if not 0 <= z <= ell:
        raise ValueError(f"z must lie in [0, {ell}], got {z}")
    if z == 0:
        return saturation_estimate(ell, p_M)
    if z == ell:
        return 0.0
    if p_M >= ell:
        # ln(1 - p/ell) undefined; only reachable with ell = 1
        return saturation_estimate(ell, p_M)
    return math.log(z / ell) / math.log1p(-p_M / ell)


def run_trep(scenario, accuracy, **kw):
    """T independent single-type runs; see :func:`mbscard.engine.run_scheme`."""
    from .engine import run_scheme

    return run_scheme("trep", scenario, accuracy, **kw)
