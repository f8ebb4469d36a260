import numpy as np
import pytest

from fairsched.greedy import GreedyConfig, greedy_schedule
from fairsched.harness import (
    Schedule,
    brute_force_periodic_oracle,
    entropy_measure,
    evaluate_schedule,
    gap_bounds,
    grid_search_rate_oracle,
    monte_carlo_state_check,
    segment_objective,
    write_schedule_csv,
)
from fairsched.mdp import MdpConfig, relative_value_iteration, rollout_policy, detect_period
from fairsched.models import FairnessParam, SystemModel, fair_cost, steady_state
from fairsched.presets import case1_systems, case2_systems
from fairsched.rate import ThresholdPolicy, rate_cost


def _scalar(a):
    return SystemModel(A=[[a]], C=[[1.0]], Q=[[1.0]], R_meas=[[1.0]])


def test_schedule_forms():
    with pytest.raises(ValueError):
        Schedule()
    with pytest.raises(ValueError):
        Schedule(explicit=np.ones((3, 2)), cycle=np.ones((2, 2)))
    with pytest.raises(ValueError):
        Schedule(cycle=np.zeros((0, 2)))
    s = Schedule.from_run(np.ones((10, 2), dtype=np.int8), (2, 3))
    assert s.is_periodic and len(s.cycle) == 3 and len(s.prefix) == 2
    s = Schedule.from_run(np.ones((10, 2), dtype=np.int8), None)
    assert not s.is_periodic


def test_entropy_measure():
    assert entropy_measure([1.0, 1.0, 1.0, 1.0]) == pytest.approx(2.0)
    assert entropy_measure([5.0]) == pytest.approx(0.0)
    assert entropy_measure([1.0, 3.0]) < 1.0
    with pytest.raises(ValueError):
        entropy_measure([1.0, 0.0])
    with pytest.raises(ValueError):
        entropy_measure([1.0, np.inf])


def test_periodic_and_explicit_evaluations_agree():
    models = [_scalar(1.1), _scalar(0.9)]
    caches = [steady_state(m) for m in models]
    fp = FairnessParam(2.0)
    cyc = np.array([[1, 0], [0, 1], [1, 0]], dtype=np.int8)
    rep_p = evaluate_schedule(Schedule(cycle=cyc), models, fp, caches=caches)
    long = np.tile(cyc, (40_000, 1))
    rep_e = evaluate_schedule(Schedule(explicit=long), models, fp, caches=caches)
    assert rep_e.total_cost == pytest.approx(rep_p.total_cost, rel=1e-3)
    assert rep_e.q_objective == pytest.approx(rep_p.q_objective, rel=1e-3)
    assert rep_e.entropy_bits == pytest.approx(rep_p.entropy_bits, abs=1e-3)


def test_silent_sensor_costs():
    models = [_scalar(0.5), _scalar(1.1)]
    caches = [steady_state(m) for m in models]
    fp = FairnessParam(0.0)
    # Stable sensor silent: open-loop limit x = 0.25 x + 1 -> 4/3.
    cyc = np.array([[0, 1]], dtype=np.int8)
    rep = evaluate_schedule(Schedule(cycle=cyc), models, fp, caches=caches)
    assert not rep.diverged
    assert rep.per_sensor_J[0] == pytest.approx(1.0 / (1 - 0.25), rel=1e-10)
    # Unstable sensor silent: diverged, entropy undefined.
    cyc = np.array([[1, 0]], dtype=np.int8)
    rep = evaluate_schedule(Schedule(cycle=cyc), models, fp, caches=caches)
    assert rep.diverged
    assert rep.per_sensor_J[1] == np.inf
    assert np.isnan(rep.entropy_bits)


def test_evaluate_schedule_sensor_count_mismatch():
    models = [_scalar(1.1)]
    with pytest.raises(ValueError):
        evaluate_schedule(
            Schedule(cycle=np.ones((2, 3), dtype=np.int8)), models, FairnessParam(0.0)
        )


def test_segment_objective_matches_cycle_average():
    models = [_scalar(1.2), _scalar(1.05)]
    caches = [steady_state(m) for m in models]
    fp = FairnessParam(1.0)
    cyc = np.array([[1, 0], [0, 1]], dtype=np.int8)
    rep = evaluate_schedule(Schedule(cycle=cyc), models, fp, caches=caches)
    long = np.tile(cyc, (5000, 1))
    seg = segment_objective(long, models, fp, caches=caches)
    assert seg == pytest.approx(rep.q_objective, rel=1e-3)
    with pytest.raises(ValueError):
        segment_objective(np.zeros((10, 2), dtype=np.int8), models, fp, caches=caches)


def test_gap_bounds_sets_fields():
    models = [_scalar(1.1), _scalar(1.2)]
    caches = [steady_state(m) for m in models]
    fp = FairnessParam(0.0)
    table, policy = relative_value_iteration(
        models, fp, 1, MdpConfig(tau_max=8), caches=caches
    )
    masks, _ = rollout_policy(policy, (0, 0), 200, caches=caches, fp=fp)
    period = detect_period(masks)
    rep = evaluate_schedule(
        Schedule.from_run(masks, period), models, fp, caches=caches, period=period
    )
    g_star, ratio = gap_bounds(rep, models, fp, 1, caches=caches)
    assert rep.gap_lower_bound == g_star
    assert rep.relative_performance == ratio
    # The rate relaxation lower-bounds any feasible activation schedule.
    assert ratio >= 1.0 - 1e-3
    assert rep.q_objective == pytest.approx(g_star * ratio)


def test_brute_force_oracle_identical_pair():
    m = _scalar(1.2)
    models = [m, m]
    caches = [steady_state(s) for s in models]
    fp = FairnessParam(0.0)
    val, cycle = brute_force_periodic_oracle(models, fp, 1, max_period=6, caches=caches)
    # Optimal cycle alternates; value equals its exact evaluation.
    rep = evaluate_schedule(
        Schedule(cycle=np.array([[1, 0], [0, 1]], dtype=np.int8)),
        models,
        fp,
        caches=caches,
    )
    assert val == pytest.approx(rep.q_objective, rel=1e-12)
    assert len(cycle) <= 2 or detect_period(np.tile(cycle, (3, 1)))[1] <= 2


def test_brute_force_oracle_lower_bounds_greedy():
    models = [_scalar(1.15), _scalar(1.05)]
    caches = [steady_state(m) for m in models]
    fp = FairnessParam(2.0)
    val, _ = brute_force_periodic_oracle(models, fp, 1, max_period=8, caches=caches)
    masks, _, period = greedy_schedule(
        models, fp, 1, GreedyConfig(horizon=2000), caches=caches
    )
    rep = evaluate_schedule(
        Schedule.from_run(masks, period), models, fp, caches=caches, period=period
    )
    assert val <= rep.q_objective + 1e-9


def test_brute_force_oracle_size_guards():
    models = [_scalar(1.1)] * 4
    with pytest.raises(ValueError):
        brute_force_periodic_oracle(models, FairnessParam(0.0), 1)
    with pytest.raises(ValueError):
        brute_force_periodic_oracle(models[:2], FairnessParam(0.0), 1, max_period=13)


def test_grid_oracle_single_and_pair():
    models = [case1_systems()[0]]
    caches = [steady_state(models[0])]
    fp = FairnessParam(0.0)
    val, r = grid_search_rate_oracle(models, fp, 2.0, caches=caches)
    assert r[0] == pytest.approx(1.0)
    assert val == pytest.approx(fair_cost(rate_cost(1.0, caches[0]), fp))
    # Identical pair with tight budget splits evenly at q > 0.
    m = case1_systems()[0]
    models = [m, m]
    caches = [steady_state(s) for s in models]
    val, r = grid_search_rate_oracle(models, FairnessParam(2.0), 1.0, caches=caches)
    assert r.sum() <= 1.0 + 1e-9
    assert abs(r[0] - r[1]) <= 2e-3
    with pytest.raises(ValueError):
        grid_search_rate_oracle([m] * 4, fp, 2.0)
    with pytest.raises(ValueError):
        grid_search_rate_oracle(models, fp, 1.0, step=0.0)


def test_monte_carlo_state_check_small_deviation():
    m = case1_systems()[1]
    dev = monte_carlo_state_check(
        m, ThresholdPolicy(eta=1, p=0.5), trials=20_000, horizon=40, seed=0
    )
    assert dev < 0.1
    with pytest.raises(ValueError):
        monte_carlo_state_check(m, ThresholdPolicy(eta=1, p=0.5), trials=10)


def test_write_schedule_csv(tmp_path):
    masks = np.array([[1, 0], [0, 1], [1, 1]], dtype=np.int8)
    costs = np.array([1.0, 2.0, 3.0])
    path = tmp_path / "schedule.csv"
    write_schedule_csv(path, masks, costs)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,zeta_1,zeta_2,stage_cost"
    assert len(lines) == 4
    assert lines[1].startswith("0,1,0,")
