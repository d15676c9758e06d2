"""Three-step joint phase 2: blocks of T-1 slots, type-1 recount, per-type recount."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import PhaseTwoResult, SlotOutcome, Symbol, block_outcomes, ceil_div

E, A, B, C = (int(o) for o in SlotOutcome)


def m1_combination(b: int, T: int) -> tuple[Symbol, ...]:
    """Symbols type ``b`` sends over the T-1 slots of its block."""
    if T < 2:
        raise ValueError("T must be >= 2")
    if not 1 <= b <= T:
        raise ValueError(f"type {b} out of range 1..{T}")
    if b == 1:
        return (Symbol.ALPHA,) * (T - 1)
    return tuple(Symbol.BETA if j == b - 2 else Symbol.SILENT for j in range(T - 1))


def m1_combinations(T: int) -> np.ndarray:
    return np.array([[int(s) for s in m1_combination(b, T)] for b in range(1, T + 1)], dtype=np.int8)


def m1_step1(counts: np.ndarray) -> np.ndarray:
    """Step-1 outcomes, (T-1, blocks), for a (T, blocks) transmitter-count matrix."""
    counts = np.asarray(counts)
    return block_outcomes(m1_combinations(counts.shape[0]), counts)


def m1_decode_step1(block: Sequence[int]) -> tuple[bool, ...] | None:
    """Per-type presence read off one step-1 block, or ``None`` for an all-collision block."""
    block = [int(o) for o in block]
    if all(o == C for o in block):
        return None
    has_alpha = any(o == A for o in block)
    has_gap = any(o in (E, B) for o in block)
    if has_alpha and has_gap:
        raise ValueError(f"unreachable block outcome {block}")
    if has_alpha:
        return (True,) + tuple(o == C for o in block)
    return (False,) + tuple(o != E for o in block)


def decode_step1(out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised step-1 decode: returns (X guess, all-collision mask)."""
    all_c = (out == C).all(axis=0)
    type1 = (out == A).any(axis=0)
    rest = np.where(type1, out == C, out != E)
    X = np.vstack([type1[None, :], rest])
    return X, all_c


def three_step(
    counts: np.ndarray, slot_width_bits: int, *, broadcast: bool = True
) -> PhaseTwoResult:
    """Run the three-step protocol on one frame.

    ``counts[b, i]`` is the number of type-(b+1) nodes that transmitted in block
    i.  ``broadcast=False`` charges no slots for the two broadcast bitmaps (used
    for nested invocations when those are configured as free).
    """
    counts = np.asarray(counts, dtype=np.int64)
    T, ell = counts.shape
    if T < 2:
        raise ValueError("three-step protocol needs T >= 2")
    out = m1_step1(counts)
    X, all_c = decode_step1(out)
    K = int(all_c.sum())

    # step 2: type-1 transmitters of each all-collision block resend alpha
    n1 = counts[0]
    s2_empty = all_c & (n1 == 0)
    s2_coll = all_c & (n1 >= 2)
    X[0, all_c] = ~s2_empty[all_c]
    X[1:, all_c] = True
    # step 3: per-type beta slots for blocks whose step-2 slot collided
    R = int(s2_coll.sum())
    X[1:, s2_coll] = counts[1:, s2_coll] >= 1

    bp1 = ceil_div(ell, slot_width_bits) if broadcast else 0
    bp2 = ceil_div(K, slot_width_bits) if broadcast else 0
    slots = {"step1": (T - 1) * ell, "bp1": bp1, "step2": K, "bp2": bp2, "step3": (T - 1) * R}

    tx_alpha = np.zeros((T, ell), dtype=np.int64)
    tx_beta = np.zeros((T, ell), dtype=np.int64)
    rx = np.zeros((T, ell), dtype=np.int64)
    tx_alpha[0] = (T - 1) + all_c
    tx_beta[1:] = 1 + s2_coll[None, :]
    rx[:] = bp1
    if broadcast and K:
        rx[1:] += all_c[None, :]  # the one BP2 slot carrying the block's bit
    return PhaseTwoResult(X, slots, tx_alpha, tx_beta, rx, {"K": K, "R": R})
