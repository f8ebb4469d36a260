import numpy as np
import pytest

from fairsched.mdp import (
    MdpConfig,
    detect_period,
    dump_value_table,
    enumerate_actions,
    one_stage_cost,
    relative_value_iteration,
    rollout_policy,
    stage_cost_table,
    transition,
)
from fairsched.models import FairnessParam, fair_cost, steady_state
from fairsched.presets import case2_systems


@pytest.fixture(scope="module")
def c2():
    models = case2_systems()
    return models, [steady_state(m) for m in models]


def _scalar_pair(a1=1.2, a2=1.2):
    from fairsched.models import SystemModel

    mk = lambda a: SystemModel(A=[[a]], C=[[1.0]], Q=[[1.0]], R_meas=[[1.0]])
    models = [mk(a1), mk(a2)]
    return models, [steady_state(m) for m in models]


def test_mdp_config_validation():
    with pytest.raises(ValueError):
        MdpConfig(tau_max=0)
    with pytest.raises(ValueError):
        MdpConfig(damping=1.0)
    with pytest.raises(ValueError):
        MdpConfig(damping=-0.1)


def test_enumerate_actions():
    acts = enumerate_actions(5, 2)
    assert acts.shape == (16, 5)
    assert np.all(acts.sum(axis=1) <= 2)
    # Lexicographically sorted, no duplicates.
    codes = acts @ (2 ** np.arange(4, -1, -1))
    assert np.all(np.diff(codes) > 0)
    assert len(enumerate_actions(3, 3)) == 8
    with pytest.raises(ValueError):
        enumerate_actions(3, 0)
    with pytest.raises(ValueError):
        enumerate_actions(3, 4)


def test_transition_saturation_and_reset():
    cfg = MdpConfig(tau_max=3)
    assert transition((0, 3, 2), (0, 0, 1), cfg) == (1, 3, 0)
    assert transition((2,), (1,), cfg) == (0,)
    with pytest.raises(ValueError):
        transition((1, 2), (1,), cfg)


def test_stage_cost_telescopes_to_segment_objective(c2):
    _, caches = c2
    fp = FairnessParam(2.0)
    cache = caches[1]
    table = stage_cost_table(cache, fp, 15)
    for d in (1, 3, 8, 14):
        lhs = float(table[:d].sum())
        mean = float(np.mean(cache.traces(d)))
        assert lhs == pytest.approx(d * fair_cost(mean, fp), rel=1e-12)


def test_stage_cost_table_matches_scalar(c2):
    _, caches = c2
    for q in (0.0, 0.5, 2.0):
        fp = FairnessParam(q)
        table = stage_cost_table(caches[0], fp, 10)
        ref = [one_stage_cost(t, caches[0], fp) for t in range(11)]
        assert np.allclose(table, ref, rtol=1e-12)
    with pytest.raises(ValueError):
        one_stage_cost(-1, caches[0], FairnessParam(0.0))


def test_rvi_single_sensor_transmit_always():
    from fairsched.models import SystemModel

    m = SystemModel(A=[[1.3]], C=[[1.0]], Q=[[1.0]], R_meas=[[1.0]])
    cache = steady_state(m)
    fp = FairnessParam(0.0)
    table, policy = relative_value_iteration([m], fp, 1, MdpConfig(tau_max=6))
    assert table.converged
    # With budget covering every sensor, transmitting each step is optimal:
    # the average cost is the stage cost at holding time zero.
    assert table.average_cost_estimate == pytest.approx(
        one_stage_cost(0, cache, fp), rel=1e-8
    )
    assert policy.decide((0,)) == (1,)


def test_rvi_identical_pair_alternates():
    models, caches = _scalar_pair()
    fp = FairnessParam(0.0)
    table, policy = relative_value_iteration(
        models, fp, 1, MdpConfig(tau_max=8), caches=caches
    )
    assert table.converged
    masks, avg = rollout_policy(policy, (0, 0), 200, caches=caches, fp=fp)
    period = detect_period(masks)
    assert period is not None
    M, L = period
    # Two identical sensors, one slot: the optimal cycle alternates.
    assert L == 2
    assert np.all(masks.sum(axis=1) == 1)
    c = stage_cost_table(caches[0], fp, 8)
    expected = float(c[0] + c[1])  # per-step sum over both sensors
    assert table.average_cost_estimate == pytest.approx(expected, rel=1e-8)
    assert avg[-1] == pytest.approx(expected, rel=1e-2)


def test_rollout_deterministic_and_validated(c2):
    models, caches = c2
    fp = FairnessParam(0.0)
    _, policy = relative_value_iteration(
        models, fp, 2, MdpConfig(tau_max=6), caches=caches
    )
    m1, _ = rollout_policy(policy, (0,) * 5, 300, caches=caches, fp=fp)
    m2, _ = rollout_policy(policy, (0,) * 5, 300, caches=caches, fp=fp)
    assert np.array_equal(m1, m2)
    with pytest.raises(ValueError):
        rollout_policy(policy, (0,) * 5, 0)
    with pytest.raises(ValueError):
        rollout_policy(policy, (7,) * 5, 10)  # outside truncation


def test_detect_period_synthetic():
    cyc = np.array([[1, 0], [0, 1], [0, 0]], dtype=np.int8)
    seq = np.concatenate([np.array([[1, 1]], dtype=np.int8), np.tile(cyc, (5, 1))])
    assert detect_period(seq) == (1, 3)
    # Pure cycle from the start.
    assert detect_period(np.tile(cyc, (4, 1))) == (0, 3)
    # Aperiodic: strictly increasing pattern has no repeat.
    rng = np.random.default_rng(0)
    noise = rng.integers(0, 2, size=(40, 3)).astype(np.int8)
    assert detect_period(noise) is None or detect_period(noise)[1] > 1
    # min_repeats guards short tails.
    short = np.tile(cyc, (2, 1))
    assert detect_period(short, min_repeats=3) is None


def test_value_table_indexing_and_dump(tmp_path):
    models, caches = _scalar_pair()
    fp = FairnessParam(0.0)
    table, policy = relative_value_iteration(
        models, fp, 1, MdpConfig(tau_max=3), caches=caches
    )
    assert table.state_index((0, 0)) == 0
    assert table.state_index((1, 2)) == 1 * 4 + 2
    assert table.value((0, 0)) == pytest.approx(float(table.values[0]))
    path = tmp_path / "values.tsv"
    dump_value_table(table, policy, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "state\tvalue\taction"
    assert len(lines) == 4**2 + 1


def test_rvi_invariant_to_damping():
    models, caches = _scalar_pair(1.2, 1.1)
    fp = FairnessParam(0.5)
    costs = []
    for sigma in (0.2, 0.5, 0.8):
        table, _ = relative_value_iteration(
            models, fp, 1, MdpConfig(tau_max=8, damping=sigma), caches=caches
        )
        assert table.converged
        costs.append(table.average_cost_estimate)
    assert max(costs) - min(costs) <= 1e-6 * max(1.0, abs(costs[0]))
