import itertools
import json
import math

import numpy as np
import pytest

from mbscard.core import make_rng
from mbscard.omt import TourInstance, exact_tour, greedy_tour, random_instance, tsp_reduction, validate

FIXTURES = ["omt_covered.txt", "omt_budget.txt", "omt_exhausted.txt"]


def feasible_ref(inst, seq):
    """Independent statement of the tour constraints."""
    if len(seq) < 3 or seq[0] != 0 or seq[-1] != 0:
        return False
    mid = seq[1:-1]
    if any(s < 1 or s > inst.M for s in mid) or len(set(mid)) != len(mid):
        return False
    seen = set()
    energy = 0.0
    for s in mid:
        for k in range(inst.N):
            if inst.coverage[k, s]:
                seen.add(k)
                energy += inst.energy[k, s]
    links = all(math.isfinite(inst.cost[a, b]) for a, b in zip(seq, seq[1:]))
    return len(seen) == inst.N and energy <= inst.budget and links


def brute_force(inst):
    best = None
    for r in range(1, inst.M + 1):
        for perm in itertools.permutations(range(1, inst.M + 1), r):
            seq = (0, *perm, 0)
            if feasible_ref(inst, seq):
                cand = (inst.tour_cost(perm), perm)
                if best is None or cand < best:
                    best = cand
    return best


@pytest.mark.parametrize("name", FIXTURES)
def test_hand_traced_fixtures(name, data_dir):
    exp = json.loads((data_dir / "omt_fixtures.json").read_text())[name]
    inst = TourInstance.load(data_dir / name)
    g = greedy_tour(inst)
    assert list(g.sequence) == exp["greedy"]
    assert g.reason == exp["reason"]
    assert g.cost == pytest.approx(exp["cost"]) and g.energy == pytest.approx(exp["energy"])
    assert validate(inst, g.sequence).feasible == exp["greedy_feasible"]
    ex = exact_tour(inst)
    if exp["exact"] is None:
        assert ex is None
    else:
        assert list(ex.sequence) == exp["exact"] and ex.cost == pytest.approx(exp["exact_cost"])


@pytest.mark.parametrize("name", FIXTURES)
def test_text_roundtrip(name, data_dir):
    inst = TourInstance.load(data_dir / name)
    again = TourInstance.parse(inst.dumps())
    assert np.array_equal(again.cost, inst.cost) and np.array_equal(again.coverage, inst.coverage)
    assert np.array_equal(again.energy, inst.energy) and again.budget == inst.budget


@pytest.mark.parametrize(
    "text",
    [
        "[stops]\n2\n[costs]\n0 1\n1 0\n",  # no budget
        "1\n[stops]\n2",  # data before header
        "[stops]\n3\n[costs]\n0 1\n1 0\n[budget]\n1\n",  # shape
        "[stops]\n2\n[costs]\n0 1\n1 0\n[coverage]\n0 2\n[energy]\n0 1\n[budget]\n1\n",  # non-binary
        "[stops]\n2\n[costs]\n0 1\n1 0\n[coverage]\n1 0\n[energy]\n0 1\n[budget]\n1\n",  # stop 0 coverage
        "[stops]\n2\n[costs]\n0 x\n1 0\n[budget]\n1\n",
        "[nodes]\n1\n",
    ],
)
def test_parse_errors(text):
    with pytest.raises(ValueError):
        TourInstance.parse(text)


def test_validate_messages(data_dir):
    inst = TourInstance.load(data_dir / "omt_covered.txt")
    assert validate(inst, [0, 1, 2, 0]).feasible
    def kinds(seq, instance=inst):
        return {v.split(":")[0] for v in validate(instance, seq).violations}

    assert kinds([1, 2, 0]) >= {"endpoints"}
    assert kinds([0, 1, 1, 2, 0]) == {"distinct"}
    assert kinds([0, 2, 0]) == {"coverage"}
    assert kinds([0, 0]) >= {"length", "coverage"}
    assert kinds([0, 1, 9, 2, 0]) == {"stops"}
    tight = TourInstance(inst.cost, inst.coverage, inst.energy, 2.5)
    assert kinds([0, 1, 2, 0], tight) == {"energy"}
    cut = inst.cost.copy()
    cut[1, 2] = math.inf
    holed = TourInstance(cut, inst.coverage, inst.energy, inst.budget)
    assert kinds([0, 1, 2, 0], holed) == {"links"}


def test_validator_against_reference():
    rng = make_rng(7)
    inst = random_instance(rng, 5, 4, p_cover=0.5)
    agree = 0
    for _ in range(10_000):
        length = int(rng.integers(0, 8))
        seq = [0, *rng.integers(0, 7, size=length).tolist(), 0]
        if rng.random() < 0.1:
            seq[0] = int(rng.integers(1, 6))
        agree += validate(inst, seq).feasible == feasible_ref(inst, seq)
    assert agree == 10_000


@pytest.mark.parametrize("seed", range(40))
def test_exact_matches_brute_force_and_bounds_greedy(seed):
    rng = make_rng(100, seed)
    inst = random_instance(rng, int(rng.integers(2, 7)), int(rng.integers(1, 6)))
    ref = brute_force(inst)
    ex = exact_tour(inst)
    if ref is None:
        assert ex is None
        return
    assert ex.stops == ref[1] and ex.cost == pytest.approx(ref[0])
    assert validate(inst, ex.sequence).feasible
    g = greedy_tour(inst)
    if validate(inst, g.sequence).feasible:
        assert g.cost >= ex.cost - 1e-9


def test_tsp_reduction_gives_hamiltonian_cycles():
    rng = make_rng(3)
    pts = rng.uniform(0, 1, size=(6, 2))
    dist = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    inst = tsp_reduction(dist)
    ex = exact_tour(inst)
    best = min(
        sum(dist[a, b] for a, b in zip((0, *p, 0), (*p, 0))) for p in itertools.permutations(range(1, 6))
    )
    assert sorted(ex.stops) == [1, 2, 3, 4, 5] and ex.cost == pytest.approx(best)
    g = greedy_tour(inst)
    assert g.reason == "covered" and sorted(g.stops) == [1, 2, 3, 4, 5]


def test_symmetric_tie_is_lexicographically_smallest():
    inst = tsp_reduction(np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=float))
    assert exact_tour(inst).stops == (1, 2)


def test_greedy_zero_budget_stops_after_first_visit():
    inst = random_instance(make_rng(5), 4, 3, budget=0.0)
    g = greedy_tour(inst)
    assert len(g.stops) == 1 and g.reason in ("budget_exceeded", "covered")


def test_exact_size_limit():
    with pytest.raises(ValueError):
        exact_tour(random_instance(make_rng(1), 11, 2))


@pytest.mark.parametrize(
    "kw",
    [
        dict(cost=np.zeros((1, 1))),
        dict(cost=np.zeros((2, 3))),
        dict(cost=-np.ones((3, 3))),
        dict(budget=-1.0),
        dict(energy=-np.ones((1, 3))),
    ],
)
def test_instance_validation(kw):
    base = dict(cost=np.zeros((3, 3)), coverage=np.array([[0, 1, 0]], bool), energy=np.ones((1, 3)), budget=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        TourInstance(**base)
