import numpy as np
import pytest

from mbscard.core import AccuracySpec, make_rng
from mbscard.engine import NodeDraws, run_replicate, run_scheme
from mbscard.scenario import ScenarioConfig, build_model
from mbscard.srcm import run_trep

ACC = AccuracySpec(ell=256)


def _pop(seed, **kw):
    cfg = ScenarioConfig(**{"scenario": 1, "T": 4, "D": 60, "q": 0.5, **kw})
    return build_model(cfg, make_rng(seed, 0))[0]


@pytest.mark.parametrize("T", [2, 3, 4, 5, 7, 8])
@pytest.mark.parametrize("scenario", [1, 3])
def test_shared_draws_give_identical_estimates(T, scenario):
    for r in range(3):
        pop = _pop(r, T=T, scenario=scenario)
        res = run_replicate(pop, ACC, make_rng(r, 1))
        base = res.schemes["trep"]
        for s in ("hsrc_m1", "hsrc_m2"):
            assert np.array_equal(res.schemes[s].X, base.X)
            assert np.array_equal(res.schemes[s].estimates, base.estimates)


def test_trep_slot_count():
    pop = _pop(1)
    res = run_trep(pop, ACC, rng=make_rng(1, 1))
    M, T = 4, 4
    assert res.slots == M * (T * ACC.t * ACC.W + T * ACC.ell)
    assert res.phase2_slots_per_stop == [T * ACC.ell] * M


def test_single_type_reduces_to_baseline():
    pop = _pop(2, T=1)
    out = run_replicate(pop, ACC, make_rng(2, 1)).schemes
    assert out["hsrc_m1"].slots == out["trep"].slots
    assert np.array_equal(out["hsrc_m2"].estimates, out["trep"].estimates)


def test_empty_population_estimates_zero():
    pop = _pop(3, q=0.0)
    res = run_replicate(pop, ACC, make_rng(3, 1))
    for out in res.schemes.values():
        assert out.estimates.tolist() == [0.0] * 4
        assert not out.X.any()


def test_estimates_track_truth():
    pop = _pop(4, D=400, q=0.4)
    acc = AccuracySpec(ell=2048)
    res = run_replicate(pop, acc, make_rng(4, 1))
    rel = np.abs(res.schemes["hsrc_m2"].estimates - res.truth) / res.truth
    assert (rel < 0.1).all()


def test_energy_parts_are_consistent():
    pop = _pop(5)
    res = run_replicate(pop, ACC, make_rng(5, 1))
    for out in res.schemes.values():
        for part in out.energy_parts.values():
            assert (part >= 0).all()
        assert np.allclose(out.energy, sum(out.energy_parts.values()))
    # phase-1 energy does not depend on the scheme
    p1 = [res.schemes[s].energy_parts["p1_tx"] for s in res.schemes]
    assert all(np.array_equal(p1[0], x) for x in p1)


def test_explicit_draws_and_records():
    pop = _pop(6)
    draws = NodeDraws.draw(pop.N, ACC, make_rng(6, 2))
    a = run_replicate(pop, ACC, make_rng(0), draws=draws)
    b = run_replicate(pop, ACC, make_rng(99), draws=draws)
    assert np.array_equal(a.schemes["hsrc_m2"].X, b.schemes["hsrc_m2"].X)
    assert len(a.records) == 4
    trace = a.schemes["hsrc_m1"].trace(a.records)
    assert trace[0]["stop"] == 1 and "step1" in trace[0]["slots"]


def test_unknown_scheme():
    with pytest.raises(ValueError):
        run_scheme("nope", _pop(0), ACC)
