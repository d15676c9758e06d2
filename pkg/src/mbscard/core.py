"""Shared types: slot outcomes, the ideal slotted channel, bit patterns, RNG streams."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np


class SlotOutcome(IntEnum):
    EMPTY = 0
    ALPHA = 1
    BETA = 2
    COLLISION = 3

    @property
    def short(self) -> str:
        return _SHORT[self]

    @classmethod
    def parse(cls, text: str) -> "SlotOutcome":
        key = text.strip()
        for outcome, short in _SHORT.items():
            if key in (short, outcome.name, outcome.name.lower()):
                return outcome
        if key in ("0", "-"):
            return cls.EMPTY
        raise ValueError(f"unknown slot outcome {text!r}")


_SHORT = {
    SlotOutcome.EMPTY: "E",
    SlotOutcome.ALPHA: "a",
    SlotOutcome.BETA: "b",
    SlotOutcome.COLLISION: "C",
}


class Symbol(IntEnum):
    """What a node puts on the air in one slot of its block."""

    SILENT = 0
    ALPHA = 1
    BETA = 2


def resolve_slot(transmissions: Iterable[tuple[object, Symbol]]) -> SlotOutcome:
    """Outcome of one slot given ``(node_id, symbol)`` pairs of the transmitters.

    Two transmitters always collide, even when they send the same symbol.
    """
    tx = [sym for _, sym in transmissions if sym != Symbol.SILENT]
    if not tx:
        return SlotOutcome.EMPTY
    if len(tx) == 1:
        return SlotOutcome.ALPHA if tx[0] == Symbol.ALPHA else SlotOutcome.BETA
    return SlotOutcome.COLLISION


def block_outcomes(combos: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Vectorised channel for a batch of blocks.

    ``combos`` is a (types, slots) array of :class:`Symbol` codes, ``counts`` a
    (types, blocks) array with the number of transmitters of each type in each
    block.  Returns a (slots, blocks) array of :class:`SlotOutcome` codes.
    """
    combos = np.asarray(combos)
    counts = np.asarray(counts, dtype=np.int64)
    on = (combos != Symbol.SILENT).astype(np.int64)
    alpha = (combos == Symbol.ALPHA).astype(np.int64)
    total = on.T @ counts
    n_alpha = alpha.T @ counts
    out = np.full(total.shape, SlotOutcome.COLLISION, dtype=np.int8)
    out[total == 0] = SlotOutcome.EMPTY
    single = total == 1
    out[single & (n_alpha == 1)] = SlotOutcome.ALPHA
    out[single & (n_alpha == 0)] = SlotOutcome.BETA
    return out


def outcome_string(outcomes: Sequence[int]) -> str:
    return "".join(SlotOutcome(int(o)).short for o in outcomes)


def parse_outcomes(text: str) -> tuple[SlotOutcome, ...]:
    tokens = text.split() if " " in text.strip() else list(text.strip())
    return tuple(SlotOutcome.parse(tok) for tok in tokens)


def or_accumulate(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    """Element-wise OR of a cumulative bit pattern with a per-stop one."""
    prev = np.asarray(prev, dtype=bool)
    cur = np.asarray(cur, dtype=bool)
    if prev.shape != cur.shape:
        raise ValueError(f"bit pattern shape mismatch: {prev.shape} vs {cur.shape}")
    return prev | cur


def zeros_per_row(bits: np.ndarray) -> np.ndarray:
    """Empty-slot count z_b for every row of a (types, ell) bit pattern."""
    bits = np.asarray(bits, dtype=bool)
    return bits.shape[-1] - bits.sum(axis=-1)


def next_pow2(x: int) -> int:
    return 1 if x <= 1 else 1 << (int(x) - 1).bit_length()


@dataclass(frozen=True)
class AccuracySpec:
    """Accuracy target and the protocol lengths derived from it.

    ``min_exponent`` is the smallest j in the 2^-j transmit-probability scan;
    ``estimator_rate`` selects which rate the empty-slot estimator divides by:
    ``"p"`` (the un-rounded min(1, 1.6*ell/n~)) or ``"two_pow_I"`` (the rate
    nodes actually used).
    """

    epsilon: float = 0.03
    delta: float = 0.2
    W: int = 30
    t: int = 16
    ell: int = 1024
    slot_width_bits: int = 96
    min_exponent: int = 0
    estimator_rate: str = "p"

    def __post_init__(self) -> None:
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.W < 1 or self.ell < 1 or self.slot_width_bits < 1:
            raise ValueError("W, ell and slot_width_bits must be >= 1")
        if self.t < 1 or self.t & (self.t - 1):
            raise ValueError(f"t must be a power of two, got {self.t}")
        if self.min_exponent < 0:
            raise ValueError("min_exponent must be >= 0")
        if self.estimator_rate not in ("p", "two_pow_I"):
            raise ValueError("estimator_rate must be 'p' or 'two_pow_I'")

    @classmethod
    def build(
        cls,
        epsilon: float,
        delta: float,
        ell: int,
        *,
        n_all: int = 2**16,
        W: int | None = None,
        **kw,
    ) -> "AccuracySpec":
        """Derive W from delta and t from n_all (rounded up to a power of two)."""
        from .srcm import select_W

        t = next_pow2(max(1, math.ceil(math.log2(max(n_all, 2)))))
        return cls(epsilon=epsilon, delta=delta, W=W if W is not None else select_W(delta),
                   t=t, ell=ell, **kw)

    def replace(self, **kw) -> "AccuracySpec":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass(frozen=True)
class Node:
    id: int
    type_index: int  # 1-based
    x: float
    y: float
    active: bool


@dataclass(frozen=True)
class RngStream:
    """A reproducible numpy Generator keyed by (seed, stream path)."""

    seed: int
    stream: tuple[int, ...] = ()

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=self.stream)
        return np.random.Generator(np.random.PCG64(ss))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return RngStream(seed, tuple(stream)).generator()


@dataclass
class PhaseTwoResult:
    """Outcome of one phase-2 run at one stop over a (types, blocks) count matrix.

    ``tx_alpha``/``tx_beta``/``rx`` hold, per (type, block), the slots a single
    step-1 transmitter of that type and block spends transmitting each symbol
    or receiving; every transmitter of the same type and block behaves alike.
    """

    X: np.ndarray
    slots: dict[str, int]
    tx_alpha: np.ndarray
    tx_beta: np.ndarray
    rx: np.ndarray
    stats: dict[str, int]

    @property
    def total_slots(self) -> int:
        return int(sum(self.slots.values()))

    @classmethod
    def empty(cls, T: int, n_blocks: int) -> "PhaseTwoResult":
        z = np.zeros((T, n_blocks), dtype=np.int64)
        return cls(np.zeros((T, n_blocks), dtype=bool), {}, z, z.copy(), z.copy(), {})

    def per_type_energy_slots(self, counts: np.ndarray) -> dict[str, np.ndarray]:
        """Summed over transmitters: per-type alpha, beta and receive slot totals."""
        c = np.asarray(counts, dtype=np.int64)
        return {
            "tx_alpha": (c * self.tx_alpha).sum(axis=1),
            "tx_beta": (c * self.tx_beta).sum(axis=1),
            "rx": (c * self.rx).sum(axis=1),
        }


def ceil_div(a: int, b: int) -> int:
    return -(-int(a) // int(b))
