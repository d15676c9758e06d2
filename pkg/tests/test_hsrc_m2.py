import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mbscard.core import SlotOutcome as O
from mbscard.core import Symbol as S
from mbscard.core import block_outcomes, parse_outcomes
from mbscard.hsrc_m2 import (
    code_width, consistency_decode, decoder_rows, decoder_table, enumerate_chi, eta, factorize, m2_combination,
    m2_combinations, schedule_step2, split_groups, two_step,
)

a, b, o = S.ALPHA, S.BETA, S.SILENT

COMBOS_T7 = [(a, o, o), (a, a, o), (a, a, a), (o, o, b), (o, b, b), (b, b, b), (b, o, a)]
COMBOS_T8 = [
    (a, o, o, o), (a, a, o, o), (a, a, a, o), (a, a, a, a),
    (o, o, o, b), (o, o, b, b), (o, b, b, b), (b, b, b, b),
]
CHI_T8 = [
    {7, 8}, {3, 4}, {1}, {1, 6, 7, 8}, {5}, {2, 3, 4, 5}, {1, 2}, {1, 2, 5, 6, 7, 8}, {1, 3, 4}, {5, 7, 8},
    {5, 6}, {1, 2, 3, 4, 5, 6}, set(range(1, 9)), set(),
]
# step-2 slot counts per ambiguous outcome; every other ambiguous non-CCCC outcome takes one slot
STEP2_SLOTS_T8 = {
    "CCCb": 4, "aCCC": 4, "CCbb": 2, "aaCC": 2, "CCCE": 2, "CCCa": 2, "CCbC": 2, "CaCC": 2, "CbCC": 2,
    "CCaC": 2, "bCCC": 2, "ECCC": 2,
}


def _reference_rows(data_dir, T):
    with open(data_dir / f"decoder_t{T}.csv") as fh:
        return {r["outcome"].replace("A", "a").replace("B", "b"): r for r in csv.DictReader(fh)}


def _sets(text):
    return {int(x) for x in text.split()}


class TestCombinations:
    @pytest.mark.parametrize("T, table", [(7, COMBOS_T7), (8, COMBOS_T8)])
    def test_reference_tables(self, T, table):
        assert [m2_combination(t, T) for t in range(1, T + 1)] == table

    def test_t6_layout(self):
        assert [m2_combination(t, 6) for t in range(1, 7)] == [
            (a, o, o), (a, a, o), (a, a, a), (o, o, b), (o, b, b), (b, b, b)
        ]

    def test_small_t_uses_three_step_layout(self):
        assert m2_combinations(3).shape == (3, 2)
        assert eta(9) == 4 and eta(4) == 2

    def test_t6_clean_block(self):
        v = consistency_decode(parse_outcomes("aEb"), 6)
        assert v.active == {1, 4} and not v.unsure


class TestDecoderTables:
    @pytest.mark.parametrize("T, n_rows", [(7, 13), (8, 28)])
    def test_ambiguous_rows_match_reference(self, data_dir, T, n_rows):
        ref = _reference_rows(data_dir, T)
        assert len(ref) == n_rows
        ours = {r["outcome"]: r for r in decoder_rows(T)}
        ambiguous = {k for k, r in ours.items() if r["unsure"] and set(k) != {"C"}}
        assert ambiguous == set(ref)
        for outcome, r in ref.items():
            mine = ours[outcome]
            assert _sets(mine["active"]) == _sets(r["active"]), outcome
            assert _sets(mine["inactive"]) == _sets(r["inactive"]), outcome
            assert _sets(mine["unsure"]) == _sets(r["not_sure"]), outcome

    def test_chi_t8(self):
        assert {frozenset(s) for s in CHI_T8} == set(enumerate_chi(8))
        assert len(enumerate_chi(8)) == 14

    def test_chi_t7_size(self):
        assert len(enumerate_chi(7)) == 15

    @pytest.mark.parametrize("T", [7, 8])
    def test_code_width(self, T):
        assert code_width(T) == 4

    def test_step2_slots_t8(self):
        for r in decoder_rows(8):
            if not r["unsure"]:
                assert r["step2_slots"] == "0"
            elif r["outcome"] == "CCCC":
                assert r["step2_slots"] == "recursive"
            else:
                assert r["step2_slots"] == str(STEP2_SLOTS_T8.get(r["outcome"], 1)), r["outcome"]

    def test_t7_shared_beta_slot(self):
        v = consistency_decode(parse_outcomes("Cbb"), 7)
        assert v.constraint() == "one of {5, 6}"
        plan = schedule_step2(v.unsure, 7)
        assert plan.n_slots == 1 and plan.roles == {5: (0, S.BETA)}

    def test_t8_ccc_beta_plan(self):
        plan = schedule_step2(consistency_decode(parse_outcomes("CCCb"), 8).unsure, 8)
        assert plan.n_slots == 4
        assert {plan.roles[1][0], plan.roles[2][0]} == {0, 1}
        # the two "one of" pairs share a slot with opposite symbols
        assert plan.roles[5][0] == plan.roles[6][0] and {plan.roles[5][1], plan.roles[6][1]} == {a, b}

    @pytest.mark.parametrize("T", [4, 5, 6, 7, 8, 9])
    def test_table_is_a_function(self, T):
        tab = decoder_table(T)  # raises if some plan cannot separate presence patterns
        assert tab.chi[0] == frozenset() and frozenset(range(1, T + 1)) in tab.chi

    def test_all_collision(self):
        v = consistency_decode([O.COLLISION] * 4, 8)
        assert v.unsure == frozenset(range(1, 9)) and v.constraint() == "all types"
        assert schedule_step2(v.unsure, 8).recursive

    def test_rejects(self):
        with pytest.raises(ValueError):
            consistency_decode(parse_outcomes("aaa"), 3)
        with pytest.raises(ValueError):
            consistency_decode(parse_outcomes("aa"), 7)
        with pytest.raises(ValueError):
            consistency_decode(parse_outcomes("EEa"), 7)  # a lone alpha in slot 3 has no sender


def test_factorize():
    P = np.array([[1, 0, 1], [0, 1, 1], [1, 0, 0], [0, 1, 0]], bool)
    assert factorize(P) == [[0, 1], [2]]
    assert factorize(np.array([[1, 1], [0, 0]], bool)) == [[0, 1]]


@pytest.mark.parametrize("T, first, second", [(7, [1, 2, 3, 4], [5, 6, 7]), (8, [1, 2, 3, 4], [5, 6, 7, 8])])
def test_split_groups(T, first, second):
    assert split_groups(T) == (first, second)


class TestTwoStep:
    def test_small_t_delegates(self):
        counts = np.array([[2, 0], [1, 1], [0, 3]])
        res = two_step(counts, 96)
        assert np.array_equal(res.X, counts >= 1) and "K" in res.stats

    def test_recursion_on_all_collision(self):
        counts = np.zeros((8, 3), dtype=np.int64)
        counts[:, 1] = 2
        res = two_step(counts, 96)
        assert res.stats["all_collision"] == 1 and res.slots["nested"] > 0
        assert np.array_equal(res.X, counts >= 1)

    def test_nested_broadcast_modes(self):
        rng = np.random.default_rng(0)
        counts = rng.poisson(1.5, size=(8, 64))
        full = two_step(counts, 96, nested_bp="count")
        free = two_step(counts, 96, nested_bp="free")
        assert np.array_equal(full.X, free.X)
        assert full.slots["step1"] == free.slots["step1"] and full.slots["bp"] == free.slots["bp"]
        assert full.slots["nested"] > free.slots["nested"]
        with pytest.raises(ValueError):
            two_step(counts, 96, nested_bp="other")

    def test_slot_accounting(self):
        rng = np.random.default_rng(4)
        counts = rng.poisson(0.4, size=(7, 40))
        res = two_step(counts, 96)
        outs = block_outcomes(m2_combinations(7), counts)
        expected_step2 = 0
        for h in range(counts.shape[1]):
            plan = schedule_step2(consistency_decode(outs[:, h], 7).unsure, 7)
            expected_step2 += 0 if plan.recursive else plan.n_slots
        assert res.slots["step1"] == 3 * 40
        assert res.slots["bp"] == -(-4 * 40 // 96)
        assert res.slots["step2"] == expected_step2


@given(st.integers(2, 9).flatmap(lambda T: arrays(np.int64, (T, 16), elements=st.integers(0, 3))))
def test_two_step_recovers_presence(counts):
    assert np.array_equal(two_step(counts, 96).X, counts >= 1)
