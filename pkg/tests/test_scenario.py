import math

import numpy as np
import pytest

from mbscard.core import make_rng
from mbscard.scenario import (
    COVERAGE_RADIUS, ScenarioConfig, build_model, coverage_matrix, cumulative_counts, draw_type_parameters, dump_csv,
    in_range_counts, stop_plan,
)


def test_stop_plans():
    one, two = stop_plan("I"), stop_plan("II")
    assert one.M == 4 and two.M == 8
    assert one.ordered_stops()[0].tolist() == [0.75, 0.75]
    assert two.ordered_stops()[-1].tolist() == [1.75, 0.25]
    assert COVERAGE_RADIUS == pytest.approx(math.pi / 4)


@pytest.mark.parametrize("scenario, model", [(1, "I"), (2, "I"), (3, "II")])
def test_every_node_is_covered(scenario, model):
    cfg = ScenarioConfig(scenario=scenario, T=3, D=200, q=0.5)
    pop, plan = build_model(cfg, make_rng(1))
    assert cfg.network_model == model
    assert pop.coverage.any(axis=1).all()
    w, h = plan.region
    assert (pop.xy >= 0).all() and (pop.xy[:, 0] <= w).all() and (pop.xy[:, 1] <= h).all()


def test_scenario_one_fixes_parameters():
    D, q = draw_type_parameters(ScenarioConfig(T=5, D=120, q=0.25), make_rng(0))
    assert D.tolist() == [120] * 5 and q.tolist() == [0.25] * 5


def test_scenario_two_draw_ranges():
    rng = make_rng(2)
    for _ in range(50):
        D, q = draw_type_parameters(ScenarioConfig(scenario=2, T=5, D=1000, q=0.3), rng)
        assert ((D >= 500) & (D <= 1500)).all()
        assert ((q >= 0.0) & (q <= 0.6)).all()


def test_overrides():
    cfg = ScenarioConfig(scenario=2, T=2, D_per_type=(5, 7), q_per_type=(1.0, 0.0))
    pop, _ = build_model(cfg, make_rng(0))
    assert pop.D.tolist() == [5, 7]
    assert pop.true_counts().tolist() == [5, 0]


def test_counts_are_consistent():
    pop, _ = build_model(ScenarioConfig(D=150, q=0.6), make_rng(3))
    cum = cumulative_counts(pop)
    assert (np.diff(cum, axis=1) >= 0).all()
    assert cum[:, -1].tolist() == pop.true_counts().tolist()
    per_stop = in_range_counts(pop)
    assert (per_stop <= cum).all() and (per_stop.sum(axis=1) >= cum[:, -1]).all()
    assert (pop.true_counts() <= pop.D).all()


def test_per_stop_activity_can_differ():
    pop, _ = build_model(ScenarioConfig(D=200, q=0.5, activity="per_stop"), make_rng(4))
    assert (pop.active.any(axis=1) & ~pop.active.all(axis=1)).any()


def test_coverage_radius():
    plan = stop_plan("I", radius=0.1)
    cov = coverage_matrix(np.array([[0.75, 0.84], [0.75, 0.86]]), plan)
    assert cov[:, 0].tolist() == [True, False]


@pytest.mark.parametrize(
    "kw", [dict(scenario=4), dict(T=0), dict(q=1.5), dict(D=-1), dict(radius=0), dict(model="III"),
           dict(activity="x"), dict(T=2, D_per_type=(1,))]
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ScenarioConfig(**kw)


def test_config_roundtrip_and_dump():
    cfg = ScenarioConfig(scenario=3, T=2, D=10, q=0.5, q_per_type=(0.1, 0.9))
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
    pop, plan = build_model(cfg, make_rng(5))
    lines = dump_csv(pop, plan).strip().splitlines()
    assert lines[0] == "kind,id,type,x,y,active_any,stops_in_range"
    assert len(lines) == 1 + plan.M + pop.N
