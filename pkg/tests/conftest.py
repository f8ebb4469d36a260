"""Shared fixtures: benchmark systems, caches, and memoized experiment cells.

The activation-case acceptance tests all consume the same MDP / greedy /
lower-bound results, so those are computed once per session and shared.
"""

from __future__ import annotations

import numpy as np
import pytest

from fairsched.greedy import GreedyConfig, greedy_schedule
from fairsched.harness import Schedule, evaluate_schedule
from fairsched.mdp import MdpConfig, detect_period, relative_value_iteration, rollout_policy
from fairsched.models import FairnessParam, fair_cost, steady_state
from fairsched.presets import case1_systems, case2_systems
from fairsched.rate import SolverConfig, rate_cost, solve_rate_allocation

TABLE_Q = (0.0, 0.5, 2.0, 20.0)


@pytest.fixture(scope="session")
def case1():
    models = case1_systems()
    return models, [steady_state(m) for m in models]


@pytest.fixture(scope="session")
def case2():
    models = case2_systems()
    return models, [steady_state(m) for m in models]


def _solve_g_star(models, caches, fp, budget):
    r, trace = solve_rate_allocation(
        models, budget, fp, SolverConfig(seed=0), caches=caches
    )
    assert trace.converged
    return float(sum(fair_cost(rate_cost(ri, c), fp) for ri, c in zip(r, caches)))


@pytest.fixture(scope="session")
def case2_cells(case2):
    """One activation-case cell per q: MDP report, greedy report, g_star."""
    import time

    models, caches = case2
    cells = {}
    for q in TABLE_Q:
        fp = FairnessParam(q)
        g_star = _solve_g_star(models, caches, fp, 2.0)

        t0 = time.time()
        table, policy = relative_value_iteration(
            models, fp, 2, MdpConfig(tau_max=12), caches=caches
        )
        vi_seconds = time.time() - t0
        masks, _ = rollout_policy(policy, (0,) * 5, 10_000, caches=caches, fp=fp)
        mdp_period = detect_period(masks)
        mdp_report = evaluate_schedule(
            Schedule.from_run(masks, mdp_period), models, fp,
            caches=caches, period=mdp_period,
        )

        t0 = time.time()
        g_masks, _, g_period = greedy_schedule(
            models, fp, 2, GreedyConfig(horizon=10_000), caches=caches
        )
        greedy_seconds = time.time() - t0
        greedy_report = evaluate_schedule(
            Schedule.from_run(g_masks, g_period), models, fp,
            caches=caches, period=g_period,
        )

        cells[q] = {
            "g_star": g_star,
            "vi_converged": table.converged,
            "vi_seconds": vi_seconds,
            "vi_avg_cost": table.average_cost_estimate,
            "mdp_report": mdp_report,
            "mdp_period": mdp_period,
            "greedy_report": greedy_report,
            "greedy_period": g_period,
            "greedy_seconds": greedy_seconds,
        }
    return cells


@pytest.fixture(scope="session")
def case1_cells(case1):
    """Rate-case allocation and per-sensor costs for the Table-1 q values."""
    models, caches = case1
    cells = {}
    for q in TABLE_Q:
        fp = FairnessParam(q)
        r, trace = solve_rate_allocation(
            models, 2.0, fp, SolverConfig(seed=0), caches=caches
        )
        assert trace.converged
        J = np.array([rate_cost(ri, c) for ri, c in zip(r, caches)])
        cells[q] = {"rates": r, "per_J": J}
    return cells
