"""Closed-form expected slot counts and per-node energy of the three-step scheme at one stop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats


def _vec(x, T: int, name: str) -> tuple[float, ...]:
    arr = np.broadcast_to(np.asarray(x, dtype=float), (T,))
    if (arr < 0).any():
        raise ValueError(f"{name} must be non-negative")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class EnergyParams:
    """Energy per slot in each radio state, per type (index 0 is type 1)."""

    gamma_idle: tuple[float, ...]
    gamma_rx: tuple[float, ...]
    gamma_alpha: tuple[float, ...]
    gamma_beta: tuple[float, ...]
    gamma_p1_tx: float = 1.0

    def __post_init__(self) -> None:
        T = len(self.gamma_idle)
        for name in ("gamma_idle", "gamma_rx", "gamma_alpha", "gamma_beta"):
            object.__setattr__(self, name, _vec(getattr(self, name), T, name))
        if self.gamma_p1_tx < 0:
            raise ValueError("gamma_p1_tx must be non-negative")

    @property
    def T(self) -> int:
        return len(self.gamma_idle)

    @classmethod
    def uniform(
        cls, T: int, *, idle: float = 0.1, rx: float = 0.5, alpha: float = 1.0, beta: float = 1.0, p1_tx: float = 1.0
    ) -> "EnergyParams":
        return cls((idle,) * T, (rx,) * T, (alpha,) * T, (beta,) * T, p1_tx)


@dataclass(frozen=True)
class StopContext:
    """Everything the closed forms need about one stop.

    ``n_bar[b]`` counts active type-b nodes in range, ``xi``/``psi`` are the
    tagged node's activity probability and in-range flag, ``I`` the per-type
    transmit exponents.
    """

    n_bar: tuple[float, ...]
    I: tuple[int, ...]
    ell: int
    t: int = 16
    W: int = 30
    slot_width_bits: int = 96
    xi: tuple[float, ...] | None = None
    psi: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        T = len(self.n_bar)
        if len(self.I) != T:
            raise ValueError("I needs one entry per type")
        if any(n < 0 for n in self.n_bar):
            raise ValueError("n_bar must be non-negative")
        if self.ell < 1 or self.slot_width_bits < 1:
            raise ValueError("ell and slot_width_bits must be >= 1")
        xi = self.xi if self.xi is not None else (1.0,) * T
        psi = self.psi if self.psi is not None else (1,) * T
        if len(xi) != T or len(psi) != T:
            raise ValueError("xi and psi need one entry per type")
        if any(not 0.0 <= x <= 1.0 for x in xi):
            raise ValueError("xi must lie in [0, 1]")
        if any(p not in (0, 1) for p in psi):
            raise ValueError("psi must be 0 or 1")
        object.__setattr__(self, "xi", tuple(float(x) for x in xi))
        object.__setattr__(self, "psi", tuple(int(p) for p in psi))

    @property
    def T(self) -> int:
        return len(self.n_bar)

    def pi(self, b: int) -> float:
        """Probability that the tagged type-b node transmits in step 1 (b is 1-based)."""
        return self.xi[b - 1] * self.psi[b - 1] * 2.0 ** -self.I[b - 1]

    @classmethod
    def from_dict(cls, d: dict) -> "StopContext":
        d = dict(d)
        for k in ("n_bar", "I", "xi", "psi"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


class EnergyTerms(NamedTuple):
    tx: float
    idle: float
    rx: float

    @property
    def total(self) -> float:
        return self.tx + self.idle + self.rx


class SlotExpectation(NamedTuple):
    E_K: float
    E_R: float
    E_ZBP: float
    delta2: float
    delta1: float
    delta_stop: float


def uv(n: float, I: int, ell: int) -> tuple[float, float]:
    """P(no node of n picks a given block) and P(exactly one does), per-node block rate 2^-I / ell."""
    if n < 0:
        raise ValueError("n must be >= 0")
    r = 2.0**-I / ell
    u = (1.0 - r) ** n
    v = n * r * (1.0 - r) ** (n - 1) if n > 0 else 0.0
    return u, v


def _uv_all(ctx: StopContext) -> tuple[list[float], list[float]]:
    pairs = [uv(ctx.n_bar[b], ctx.I[b], ctx.ell) for b in range(ctx.T)]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def q_probs(ctx: StopContext) -> tuple[float, float, float]:
    """Probabilities of the three ways a block ends up colliding in every slot."""
    u, v = _uv_all(ctx)
    Q1 = 1.0 - u[0] - v[0]
    Q2 = v[0] * math.prod(1.0 - u[b] for b in range(1, ctx.T))
    Q3 = u[0] * math.prod(1.0 - u[b] - v[b] for b in range(1, ctx.T))
    return Q1, Q2, Q3


def expected_ceil_binomial(n: int, p: float, d: int) -> float:
    """E[ceil(K / d)] for K ~ Binomial(n, p), summed over the pmf."""
    k = np.arange(n + 1)
    pmf = stats.binom.pmf(k, n, min(max(p, 0.0), 1.0))
    return float(np.dot(pmf, -(-k // d)))


def expected_counts(ctx: StopContext) -> SlotExpectation:
    Q1, Q2, Q3 = q_probs(ctx)
    ell, T = ctx.ell, ctx.T
    E_K = ell * (Q1 + Q2 + Q3)
    E_R = ell * Q1
    E_ZBP = math.ceil(ell / ctx.slot_width_bits) + expected_ceil_binomial(ell, Q1 + Q2 + Q3, ctx.slot_width_bits)
    delta2 = (T - 1) * ell + E_K + (T - 1) * E_R + E_ZBP
    delta1 = ctx.t * ctx.W * T
    return SlotExpectation(E_K, E_R, E_ZBP, delta2, delta1, delta1 + delta2)


def energy_phase1(b: int, ctx: StopContext, params: EnergyParams) -> EnergyTerms:
    """Phase-1 energy of one type-b node: W trials, one transmission per trial when active."""
    xp = ctx.xi[b - 1] * ctx.psi[b - 1]
    tx = xp * ctx.W * params.gamma_p1_tx
    idle = ((ctx.t - 1) * xp + ctx.t * (1.0 - xp)) * ctx.W * params.gamma_idle[b - 1]
    return EnergyTerms(tx, idle, 0.0)


def energy_phase2_type1(ctx: StopContext, params: EnergyParams) -> EnergyTerms:
    pi1 = ctx.pi(1)
    if pi1 > 0 and ctx.n_bar[0] < 1:
        raise ValueError("inconsistent context: type-1 node may transmit but n_bar[0] < 1")
    T, bp1 = ctx.T, math.ceil(ctx.ell / ctx.slot_width_bits)
    delta2 = expected_counts(ctx).delta2
    if pi1 == 0:
        return EnergyTerms(0.0, params.gamma_idle[0] * delta2, 0.0)
    u_other = uv(ctx.n_bar[0] - 1, ctx.I[0], ctx.ell)[0]
    u, _ = _uv_all(ctx)
    Qb1 = 1.0 - u_other
    Qb2 = u_other * math.prod(1.0 - u[b] for b in range(1, T))
    tx = (T - 1 + Qb1 + Qb2) * pi1 * params.gamma_alpha[0]
    rx = pi1 * bp1 * params.gamma_rx[0]
    idle = params.gamma_idle[0] * ((1 - pi1) * delta2 + pi1 * (delta2 - (T - 1 + bp1 + Qb1 + Qb2)))
    return EnergyTerms(tx, idle, rx)


def energy_phase2_typeb(b: int, ctx: StopContext, params: EnergyParams) -> EnergyTerms:
    if not 2 <= b <= ctx.T:
        raise ValueError(f"type {b} out of range 2..{ctx.T}")
    pib = ctx.pi(b)
    if pib > 0 and ctx.n_bar[b - 1] < 1:
        raise ValueError(f"inconsistent context: type-{b} node may transmit but n_bar < 1")
    T, bp1 = ctx.T, math.ceil(ctx.ell / ctx.slot_width_bits)
    delta2 = expected_counts(ctx).delta2
    g_idle = params.gamma_idle[b - 1]
    if pib == 0:
        return EnergyTerms(0.0, g_idle * delta2, 0.0)
    Q1, _, _ = q_probs(ctx)
    u, v = _uv_all(ctx)
    others = [i for i in range(1, T) if i != b - 1]
    Qh1 = v[0] * math.prod(1.0 - u[i] for i in others)
    u_self = uv(ctx.n_bar[b - 1] - 1, ctx.I[b - 1], ctx.ell)[0]
    Qh2 = u[0] * (1.0 - u_self) * math.prod(1.0 - u[i] - v[i] for i in others)
    tx = (1.0 + Q1) * pib * params.gamma_beta[b - 1]
    rx = (bp1 + Q1 + Qh1 + Qh2) * pib * params.gamma_rx[b - 1]
    idle = g_idle * ((1 - pib) * delta2 + pib * (delta2 - (1 + bp1 + 2 * Q1 + Qh1 + Qh2)))
    return EnergyTerms(tx, idle, rx)


def energy_phase2(b: int, ctx: StopContext, params: EnergyParams) -> EnergyTerms:
    return energy_phase2_type1(ctx, params) if b == 1 else energy_phase2_typeb(b, ctx, params)


def energy_total(b: int, ctx: StopContext, params: EnergyParams) -> float:
    """Expected energy of one type-b node over both phases at this stop."""
    return energy_phase1(b, ctx, params).total + energy_phase2(b, ctx, params).total


def analyze_rows(ctx: StopContext, params: EnergyParams | None = None) -> dict[str, float]:
    """Flat record of every closed-form quantity for one stop (used by the CLI)."""
    params = params or EnergyParams.uniform(ctx.T)
    Q1, Q2, Q3 = q_probs(ctx)
    ex = expected_counts(ctx)
    row = {"Q1": Q1, "Q2": Q2, "Q3": Q3, **ex._asdict()}
    for b in range(1, ctx.T + 1):
        row[f"energy_type{b}"] = energy_total(b, ctx, params)
    return row


@dataclass
class StopSample:
    """Per-replicate draws from :func:`simulate_stop`."""

    delta_stop: np.ndarray  # (R,) slots at the stop
    K: np.ndarray  # (R,)
    R: np.ndarray  # (R,)
    phase2_energy: np.ndarray  # (R, T) tagged node of each type, phase 2 only
    phase1_tx: np.ndarray  # (R, T) tagged node's phase-1 transmissions


def simulate_stop(
    ctx: StopContext, params: EnergyParams, rng: np.random.Generator, replicates: int
) -> StopSample:
    """Monte Carlo counterpart of the closed forms for one stop.

    Each type has ``n_bar[b]`` in-range active nodes (integers); the tagged
    type-b node is one of them with probability ``xi*psi`` and otherwise sits
    out.  Every node transmits with probability 2^-I_b in a uniform block.
    """
    from .hsrc_m1 import three_step
    from .srcm import draw_trial_bits

    T, ell = ctx.T, ctx.ell
    n = np.asarray(ctx.n_bar)
    if not np.allclose(n, np.round(n)):
        raise ValueError("simulation needs integer n_bar")
    n = np.round(n).astype(np.int64)
    rates = 2.0 ** -np.asarray(ctx.I, dtype=float)
    delta1 = ctx.t * ctx.W * T
    d_stop = np.zeros(replicates)
    Ks = np.zeros(replicates, dtype=np.int64)
    Rs = np.zeros(replicates, dtype=np.int64)
    e2 = np.zeros((replicates, T))
    tx1 = np.zeros((replicates, T))
    xp = np.asarray(ctx.xi) * np.asarray(ctx.psi)
    for r in range(replicates):
        member = rng.random(T) < xp
        counts = np.zeros((T, ell), dtype=np.int64)
        tagged_block = np.full(T, -1)
        for b in range(T):
            if n[b] == 0:
                continue
            send = rng.random(n[b]) < rates[b]
            blocks = rng.integers(0, ell, size=n[b])
            np.add.at(counts[b], blocks[send], 1)
            if member[b] and send[0]:
                tagged_block[b] = blocks[0]
        res = three_step(counts, ctx.slot_width_bits)
        d2 = res.total_slots
        d_stop[r] = delta1 + d2
        Ks[r], Rs[r] = res.stats["K"], res.stats["R"]
        for b in range(T):
            h = tagged_block[b]
            if h < 0:
                e2[r, b] = params.gamma_idle[b] * d2
                continue
            a, be, rx = res.tx_alpha[b, h], res.tx_beta[b, h], res.rx[b, h]
            e2[r, b] = (
                a * params.gamma_alpha[b] + be * params.gamma_beta[b] + rx * params.gamma_rx[b]
                + (d2 - a - be - rx) * params.gamma_idle[b]
            )
        bits = draw_trial_bits(T, ctx.t, rng, trials=ctx.W).reshape(T, -1).sum(axis=1)
        tx1[r] = np.where(member, bits, 0)
    return StopSample(d_stop, Ks, Rs, e2, tx1)
