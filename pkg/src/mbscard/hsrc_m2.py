"""Two-step joint phase 2 with generalised symbol combinations and a recursive collision split.

Step 1 uses blocks of ``T // 2`` slots.  Every reachable block outcome is
classified offline by brute force over transmitter multiplicities in
{0, 1, >=2}^T; types whose presence is still open form the block's *unsure
set*, whose index in the ordered list ``chi`` is broadcast to the nodes.  A
resolution plan (one ``(slot, symbol)`` per unsure type, or silence) is derived
per unsure set and checked to determine presence for every outcome that maps to
it.  The all-collision outcome is resolved by running the protocol recursively
on two halves of the type range.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import PhaseTwoResult, SlotOutcome, Symbol, block_outcomes, ceil_div, outcome_string
from .hsrc_m1 import m1_combinations, three_step

E, A, B, C = (int(o) for o in SlotOutcome)

DESIGN_SEARCH_LIMIT = 250_000
NESTED_BP_MODES = ("count", "free")


class TypeStatus(Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"
    UNSURE = "unsure"


def eta(T: int) -> int:
    return T // 2


def m2_combination(b: int, T: int) -> tuple[Symbol, ...]:
    """Symbols type ``b`` sends in its block; T <= 3 falls back to the three-step layout."""
    if T < 2:
        raise ValueError("T must be >= 2")
    if not 1 <= b <= T:
        raise ValueError(f"type {b} out of range 1..{T}")
    if T <= 3:
        return tuple(Symbol(int(s)) for s in m1_combinations(T)[b - 1])
    h = eta(T)
    row = [Symbol.SILENT] * h
    if b <= h:
        row[:b] = [Symbol.ALPHA] * b
    elif T % 2 == 1 and b == T:
        row[0] = Symbol.BETA
        row[h - 1] = Symbol.ALPHA
    else:
        k = b - h
        row[h - k:] = [Symbol.BETA] * k
    return tuple(row)


def m2_combinations(T: int) -> np.ndarray:
    return np.array([[int(s) for s in m2_combination(b, T)] for b in range(1, T + 1)], dtype=np.int8)


def encode_outcomes(out: np.ndarray) -> np.ndarray:
    """Base-4 code of each column of a (slots, blocks) outcome array, first slot most significant."""
    out = np.asarray(out, dtype=np.int64)
    weights = 4 ** np.arange(out.shape[0] - 1, -1, -1, dtype=np.int64)
    return weights @ out


def decode_code(code: int, n_slots: int) -> tuple[int, ...]:
    return tuple((code >> (2 * (n_slots - 1 - k))) & 3 for k in range(n_slots))


# --------------------------------------------------------------------------- decoder


@dataclass(frozen=True)
class Verdict:
    """What step 1 reveals about each type in one block."""

    outcome: tuple[int, ...]
    status: tuple[TypeStatus, ...]
    presence: np.ndarray  # (k, T) distinct consistent presence vectors
    multiplicities: np.ndarray  # (r, T) consistent multiplicity vectors, 2 meaning ">= 2"

    @property
    def active(self) -> frozenset[int]:
        return frozenset(b + 1 for b, s in enumerate(self.status) if s is TypeStatus.ACTIVE)

    @property
    def inactive(self) -> frozenset[int]:
        return frozenset(b + 1 for b, s in enumerate(self.status) if s is TypeStatus.INACTIVE)

    @property
    def unsure(self) -> frozenset[int]:
        return frozenset(b + 1 for b, s in enumerate(self.status) if s is TypeStatus.UNSURE)

    def constraint(self) -> str:
        """Readable form of what is known about the unsure types."""
        U = sorted(self.unsure)
        if not U:
            return ""
        if len(U) == len(self.status):
            return "all types"
        idx = [u - 1 for u in U]
        P = np.unique(self.presence[:, idx], axis=0)
        parts = []
        for group in factorize(P):
            names = [U[g] for g in group]
            sub = np.unique(P[:, group], axis=0)
            if len(group) == 1:
                parts.append(str(names[0]))
            elif len(sub) == len(group) and (sub.sum(axis=1) == 1).all():
                parts.append("one of {" + ", ".join(map(str, names)) + "}")
            else:
                rows = sorted(
                    (tuple(n for n, bit in zip(names, r) if bit) for r in sub), key=lambda s: (len(s), s)
                )
                parts.append("one of {" + ", ".join("{" + ", ".join(map(str, r)) + "}" for r in rows) + "}")
        return "; ".join(parts)


@lru_cache(maxsize=None)
def _multiplicity_grid(T: int) -> np.ndarray:
    return np.array(list(itertools.product(range(3), repeat=T)), dtype=np.int64)


@lru_cache(maxsize=None)
def _consistency_groups(T: int) -> dict[int, np.ndarray]:
    """Outcome code -> consistent multiplicity vectors, for every reachable step-1 outcome."""
    if T > 16:
        raise ValueError("decoder enumeration is limited to T <= 16")
    grid = _multiplicity_grid(T)
    codes = encode_outcomes(block_outcomes(m2_combinations(T), grid.T))
    order = np.argsort(codes, kind="stable")
    codes_sorted = codes[order]
    uniq, starts = np.unique(codes_sorted, return_index=True)
    bounds = list(starts[1:]) + [len(codes_sorted)]
    return {int(c): grid[order[s:e]] for c, s, e in zip(uniq, starts, bounds)}


def _verdict(T: int, code: int, mult: np.ndarray) -> Verdict:
    pres = mult >= 1
    status = []
    for b in range(T):
        if pres[:, b].all():
            status.append(TypeStatus.ACTIVE)
        elif not pres[:, b].any():
            status.append(TypeStatus.INACTIVE)
        else:
            status.append(TypeStatus.UNSURE)
    out = decode_code(code, m2_combinations(T).shape[1])
    return Verdict(out, tuple(status), np.unique(pres, axis=0), mult)


def consistency_decode(block: Sequence[int], T: int) -> Verdict:
    """Verdict for an observed step-1 block of ``T // 2`` slots (T >= 4)."""
    if T < 4:
        raise ValueError("the two-step decoder applies to T >= 4")
    block = tuple(int(o) for o in block)
    if len(block) != eta(T):
        raise ValueError(f"block must have {eta(T)} slots, got {len(block)}")
    code = int(encode_outcomes(np.array(block)[:, None])[0])
    groups = _consistency_groups(T)
    if code not in groups:
        raise ValueError(f"outcome {outcome_string(block)} is unreachable for T={T}")
    return _verdict(T, code, groups[code])


def reachable_outcomes(T: int) -> list[tuple[int, ...]]:
    h = eta(T)
    return [decode_code(c, h) for c in sorted(_consistency_groups(T))]


def enumerate_chi(T: int) -> list[frozenset[int]]:
    """Distinct unsure sets in first-reachable order of the lexicographic outcome scan (E<a<b<C).

    The empty set is always present.
    """
    chi: list[frozenset[int]] = []
    for out in reachable_outcomes(T):
        U = consistency_decode(out, T).unsure
        if U not in chi:
            chi.append(U)
    if frozenset() not in chi:
        chi.append(frozenset())
    return chi


def code_width(T: int) -> int:
    """Bits per block in the broadcast class code."""
    return max(1, math.ceil(math.log2(len(enumerate_chi(T)))))


# --------------------------------------------------------------------------- planner


def factorize(P: np.ndarray) -> list[list[int]]:
    """Finest split of the columns of a 0/1 row set into groups whose projections multiply back to P.

    The smallest splittable column subset is peeled off first; it cannot be
    split further, because any finer factor would be a smaller subset.
    """
    P = np.unique(np.asarray(P, dtype=bool), axis=0)
    n = P.shape[1]
    if n <= 1:
        return [list(range(n))] if n else []
    for k in range(1, n):
        for G in itertools.combinations(range(n), k):
            rest = [c for c in range(n) if c not in G]
            if len(np.unique(P[:, list(G)], axis=0)) * len(np.unique(P[:, rest], axis=0)) == len(P):
                tail = [[rest[i] for i in g] for g in factorize(P[:, rest])]
                return sorted([list(G)] + tail, key=lambda g: g[0])
    return [list(range(n))]


@dataclass(frozen=True)
class Plan:
    """Step-2 roles for the unsure types of one class.

    ``roles`` maps a 1-based type to ``(slot, Symbol)``; unsure types absent
    from it stay silent.  ``recursive`` marks the all-collision class.
    """

    unsure: frozenset[int]
    n_slots: int
    roles: dict[int, tuple[int, Symbol]] = field(default_factory=dict)
    recursive: bool = False

    def combo(self, T: int) -> np.ndarray:
        """(T, n_slots) symbol table for the plan; non-participants are silent."""
        arr = np.zeros((T, self.n_slots), dtype=np.int8)
        for b, (slot, sym) in self.roles.items():
            arr[b - 1, slot] = int(sym)
        return arr


def _decodes(design: np.ndarray, mults: list[np.ndarray]) -> bool:
    """True if step-2 outcomes under ``design`` (types x slots) pin down presence for every set."""
    for M in mults:
        out = encode_outcomes(block_outcomes(design, M.T)) if design.shape[1] else np.zeros(len(M), np.int64)
        pres = (M >= 1) @ (1 << np.arange(M.shape[1], dtype=np.int64))
        pairs = np.unique(np.stack([out, pres]), axis=1)
        if len(np.unique(pairs[0])) != pairs.shape[1]:
            return False
    return True


def _design_key(options: tuple[tuple[int, int] | None, ...]) -> tuple:
    rank = [2 * o[0] + (0 if o[1] == Symbol.BETA else 1) if o else 10**6 for o in options]
    return (sum(o is not None for o in options), rank)


def _search_group(mults: list[np.ndarray]) -> tuple[int, tuple[tuple[int, int] | None, ...]]:
    """Fewest-slot role assignment for one group of types, fewest transmitters on ties."""
    g = mults[0].shape[1]
    for s in range(0, g + 1):
        choices = [None] + [(k, int(sym)) for k in range(s) for sym in (Symbol.BETA, Symbol.ALPHA)]
        if len(choices) ** g > DESIGN_SEARCH_LIMIT:
            break
        best = None
        for options in itertools.product(choices, repeat=g):
            design = np.zeros((g, s), dtype=np.int8)
            for i, o in enumerate(options):
                if o is not None:
                    design[i, o[0]] = o[1]
            if _decodes(design, mults):
                key = _design_key(options)
                if best is None or key < best[0]:
                    best = (key, options)
        if best is not None:
            return s, best[1]
    # a dedicated beta slot per type always decodes presence
    return g, tuple((i, int(Symbol.BETA)) for i in range(g))


@lru_cache(maxsize=None)
def _plans(T: int) -> dict[frozenset[int], Plan]:
    groups = _consistency_groups(T)
    by_class: dict[frozenset[int], list[np.ndarray]] = {}
    for code, mult in groups.items():
        U = _verdict(T, code, mult).unsure
        by_class.setdefault(U, []).append(mult)
    plans: dict[frozenset[int], Plan] = {}
    everyone = frozenset(range(1, T + 1))
    for U, mult_sets in by_class.items():
        if not U:
            plans[U] = Plan(U, 0)
            continue
        if U == everyone:
            plans[U] = Plan(U, 0, recursive=True)
            continue
        idx = [u - 1 for u in sorted(U)]
        # join the presence factorisations of every outcome sharing this class
        parent = list(range(len(idx)))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for M in mult_sets:
            for grp in factorize(M[:, idx] >= 1):
                for a in grp[1:]:
                    parent[find(a)] = find(grp[0])
        blocks: dict[int, list[int]] = {}
        for i in range(len(idx)):
            blocks.setdefault(find(i), []).append(i)
        roles: dict[int, tuple[int, Symbol]] = {}
        offset = 0
        for members in sorted(blocks.values(), key=lambda m: m[0]):
            cols = [idx[i] for i in members]
            sub = [np.unique(M[:, cols], axis=0) for M in mult_sets]
            n, options = _search_group(sub)
            for i, o in zip(members, options):
                if o is not None:
                    roles[sorted(U)[i]] = (offset + o[0], Symbol(o[1]))
            offset += n
        plans[U] = Plan(U, offset, roles)
    return plans


def schedule_step2(unsure: frozenset[int] | set[int], T: int) -> Plan:
    """Resolution plan for the class with this unsure set."""
    plans = _plans(T)
    key = frozenset(unsure)
    if key not in plans:
        raise ValueError(f"{sorted(key)} is not an unsure set for T={T}")
    return plans[key]


def split_groups(T: int) -> tuple[list[int], list[int]]:
    """Type ranges (1-based) for the recursive resolution of an all-collision block."""
    first = (T + 1) // 2
    return list(range(1, first + 1)), list(range(first + 1, T + 1))


# --------------------------------------------------------------------------- runtime tables


@dataclass(frozen=True)
class DecoderTable:
    T: int
    n_slots: int
    combos: np.ndarray
    chi: list[frozenset[int]]
    width: int
    active: dict[int, np.ndarray]  # outcome code -> (T,) bool presence known after step 1
    plan_of: dict[int, Plan]
    class_code: dict[int, int]
    step2: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]  # code -> (plan combo, sorted s2 codes, presence rows)
    all_collision: int


@lru_cache(maxsize=None)
def decoder_table(T: int) -> DecoderTable:
    if T < 4:
        raise ValueError("decoder tables exist for T >= 4")
    groups = _consistency_groups(T)
    chi = enumerate_chi(T)
    active, plan_of, class_code, step2 = {}, {}, {}, {}
    for code, mult in groups.items():
        v = _verdict(T, code, mult)
        plan = schedule_step2(v.unsure, T)
        active[code] = np.array([s is TypeStatus.ACTIVE for s in v.status])
        plan_of[code] = plan
        class_code[code] = chi.index(v.unsure)
        if v.unsure and not plan.recursive:
            combo = plan.combo(T)
            s2 = encode_outcomes(block_outcomes(combo, mult.T))
            lut: dict[int, np.ndarray] = {}
            for key, m in zip(s2, mult >= 1):
                prev = lut.setdefault(int(key), m)
                if not np.array_equal(prev, m):
                    raise AssertionError(f"plan for {outcome_string(v.outcome)} is ambiguous")
            keys = np.array(sorted(lut), dtype=np.int64)
            step2[code] = (combo, keys, np.stack([lut[int(k)] for k in keys]))
    h = eta(T)
    all_c = int(encode_outcomes(np.full((h, 1), C))[0])
    return DecoderTable(T, h, m2_combinations(T), chi, code_width(T), active, plan_of, class_code, step2, all_c)


def decoder_rows(T: int) -> list[dict[str, str]]:
    """One row per reachable step-1 outcome: verdict columns and step-2 slot count."""
    rows = []
    for out in reachable_outcomes(T):
        v = consistency_decode(out, T)
        plan = schedule_step2(v.unsure, T)
        rows.append(
            {
                "outcome": outcome_string(out),
                "active": " ".join(map(str, sorted(v.active))),
                "inactive": " ".join(map(str, sorted(v.inactive))),
                "unsure": " ".join(map(str, sorted(v.unsure))),
                "constraint": v.constraint(),
                "class_code": str(enumerate_chi(T).index(v.unsure)),
                "step2_slots": "recursive" if plan.recursive else str(plan.n_slots),
            }
        )
    return rows


# --------------------------------------------------------------------------- protocol


def two_step(
    counts: np.ndarray,
    slot_width_bits: int,
    *,
    nested_bp: str = "count",
    _top: bool = True,
) -> PhaseTwoResult:
    """Run the two-step protocol on one frame of ``counts`` (types x blocks)."""
    if nested_bp not in NESTED_BP_MODES:
        raise ValueError(f"nested_bp must be one of {NESTED_BP_MODES}")
    counts = np.asarray(counts, dtype=np.int64)
    T, n = counts.shape
    charge_bp = _top or nested_bp == "count"
    if T <= 3:
        return three_step(counts, slot_width_bits, broadcast=charge_bp)

    tab = decoder_table(T)
    out = block_outcomes(tab.combos, counts)
    codes = encode_outcomes(out)
    X = np.zeros((T, n), dtype=bool)
    tx_alpha = np.zeros((T, n), dtype=np.int64)
    tx_beta = np.zeros((T, n), dtype=np.int64)
    rx = np.zeros((T, n), dtype=np.int64)
    tx_alpha += (tab.combos == Symbol.ALPHA).sum(axis=1)[:, None]
    tx_beta += (tab.combos == Symbol.BETA).sum(axis=1)[:, None]
    bp = ceil_div(tab.width * n, slot_width_bits) if charge_bp else 0
    rx += bp

    step2_slots = 0
    nested_slots = 0
    n_ambiguous = 0
    all_c_mask = codes == tab.all_collision
    for code in np.unique(codes):
        code = int(code)
        cols = np.flatnonzero(codes == code)
        X[:, cols] = tab.active[code][:, None]
        if code not in tab.step2:
            continue
        combo, keys, presence = tab.step2[code]
        n_ambiguous += len(cols)
        step2_slots += combo.shape[1] * len(cols)
        sub = np.minimum(counts[:, cols], 2)
        s2 = encode_outcomes(block_outcomes(combo, sub))
        X[:, cols] = presence[np.searchsorted(keys, s2)].T
        tx_alpha[:, cols] += (combo == Symbol.ALPHA).sum(axis=1)[:, None]
        tx_beta[:, cols] += (combo == Symbol.BETA).sum(axis=1)[:, None]

    K = int(all_c_mask.sum())
    nested_stats = {}
    if K:
        cols = np.flatnonzero(all_c_mask)
        for group in split_groups(T):
            rows = [g - 1 for g in group]
            res = two_step(counts[np.ix_(rows, cols)], slot_width_bits, nested_bp=nested_bp, _top=False)
            X[np.ix_(rows, cols)] = res.X
            tx_alpha[np.ix_(rows, cols)] += res.tx_alpha
            tx_beta[np.ix_(rows, cols)] += res.tx_beta
            rx[np.ix_(rows, cols)] += res.rx
            nested_slots += res.total_slots
            for k, v in res.stats.items():
                nested_stats[k] = nested_stats.get(k, 0) + v

    slots = {"step1": tab.n_slots * n, "bp": bp, "step2": step2_slots, "nested": nested_slots}
    stats = {"all_collision": K, "ambiguous": n_ambiguous, "nested_bp_counted": int(nested_bp == "count")}
    stats.update({f"nested_{k}": v for k, v in nested_stats.items() if not k.startswith("nested_")})
    return PhaseTwoResult(X, slots, tx_alpha, tx_beta, rx, stats)
