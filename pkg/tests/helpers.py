"""Enumerators and independent reference implementations shared by the tests."""
from __future__ import annotations

import itertools

import numpy as np

from mbscard.core import Symbol, resolve_slot


def count_matrices(T: int, ell: int, max_nodes: int, batch: int = 100_000):
    """Every (T, ell) matrix of per-block transmitter counts with total <= max_nodes, in batches.

    Each matrix is the sufficient statistic of many node-level configurations
    (which node is active, which block it picked, whether its coin fired).
    """
    cells = T * ell
    for k in range(max_nodes + 1):
        it = itertools.combinations_with_replacement(range(cells), k)
        while True:
            chunk = list(itertools.islice(it, batch))
            if not chunk:
                break
            idx = np.array(chunk, dtype=np.int64).reshape(len(chunk), k)
            flat = np.zeros((len(chunk), cells), dtype=np.int64)
            for j in range(k):
                np.add.at(flat, (np.arange(len(chunk)), idx[:, j]), 1)
            yield flat.reshape(-1, T, ell)


def as_frame(batch: np.ndarray) -> np.ndarray:
    """Lay a (B, T, ell) batch side by side as one (T, B*ell) frame; blocks decode independently."""
    B, T, ell = batch.shape
    return batch.transpose(1, 0, 2).reshape(T, B * ell)


def node_configurations(T: int, ell: int, n_nodes: int):
    """Literal per-node enumeration: (type, active, block, coin) for each of n_nodes nodes."""
    per_node = list(itertools.product(range(1, T + 1), (False, True), range(ell), (False, True)))
    yield from itertools.product(per_node, repeat=n_nodes)


def slot_outcomes_by_node(combos: np.ndarray, nodes, ell: int) -> np.ndarray:
    """(slots, ell) outcomes computed one slot at a time from the transmitting nodes."""
    n_slots = combos.shape[1]
    out = np.zeros((n_slots, ell), dtype=np.int8)
    for h in range(ell):
        for s in range(n_slots):
            tx = [
                (k, Symbol(int(combos[typ - 1, s])))
                for k, (typ, active, block, coin) in enumerate(nodes)
                if active and coin and block == h
            ]
            out[s, h] = resolve_slot(tx)
    return out


def ground_truth(T: int, ell: int, nodes) -> np.ndarray:
    X = np.zeros((T, ell), dtype=bool)
    for typ, active, block, coin in nodes:
        if active and coin:
            X[typ - 1, block] = True
    return X


def counts_of(T: int, ell: int, nodes) -> np.ndarray:
    c = np.zeros((T, ell), dtype=np.int64)
    for typ, active, block, coin in nodes:
        if active and coin:
            c[typ - 1, block] += 1
    return c
