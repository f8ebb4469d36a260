"""Greedy activation scheduling: transmit the costliest sensors each step.

At every step the Z sensors whose pending holding time would incur the
largest one-stage cost are selected, ties going to the lowest sensor index.
The resulting schedule is deterministic and eventually periodic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fairsched.models import FairnessParam, SteadyStateCache, SystemModel, steady_state
from fairsched.mdp import detect_period, stage_cost_table


@dataclass(frozen=True)
class GreedyConfig:
    horizon: int = 10_000
    initial_tau: tuple = None
    tie_break: str = "lowest_index"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.tie_break != "lowest_index":
            raise ValueError(f"unknown tie_break rule {self.tie_break!r}")


def greedy_step(
    tau_prev: np.ndarray,
    models: list[SystemModel],
    fp: FairnessParam,
    Z: int,
    caches: list[SteadyStateCache] | None = None,
    cost_tables: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Select the Z sensors carrying the largest one-stage cost this step.

    Each sensor is ranked by the stage cost at the holding time it carries at
    the current step, i.e. the count of steps since the slot after its last
    selection. Ties break to the lowest sensor index.
    """
    tau_prev = np.asarray(tau_prev, dtype=np.int64)
    N = len(models)
    if len(tau_prev) != N:
        raise ValueError(f"tau_prev has length {len(tau_prev)}, expected {N}")
    pending = tau_prev
    if cost_tables is not None:
        costs = np.array([cost_tables[i][pending[i]] for i in range(N)])
    else:
        if caches is None:
            caches = [steady_state(m) for m in models]
        costs = np.array(
            [
                stage_cost_table(caches[i], fp, int(pending[i]))[pending[i]]
                for i in range(N)
            ]
        )
    mask = np.zeros(N, dtype=np.int8)
    # Repeated argmax; np.argmax already returns the first (lowest) index on ties.
    for _ in range(min(Z, N)):
        j = int(np.argmax(np.where(mask == 1, -np.inf, costs)))
        mask[j] = 1
    return mask


def greedy_schedule(
    models: list[SystemModel],
    fp: FairnessParam,
    Z: int,
    cfg: GreedyConfig = GreedyConfig(),
    caches: list[SteadyStateCache] | None = None,
):
    """Run the greedy selector over the horizon.

    Returns the (horizon, N) action sequence, the (horizon, N) holding-time
    states seen at each step, and the detected (burn_in, period) pair, or
    None when no cycle completed within the horizon.
    """
    N = len(models)
    if caches is None:
        caches = [steady_state(m) for m in models]
    # Holding times are unbounded here; precompute costs generously and
    # extend on demand if a sensor goes unselected for long.
    cap = 4 * N + 16
    tables = [stage_cost_table(c, fp, cap) for c in caches]

    if cfg.initial_tau is None:
        tau = np.zeros(N, dtype=np.int64)
    else:
        tau = np.asarray(cfg.initial_tau, dtype=np.int64)

    schedule = np.empty((cfg.horizon, N), dtype=np.int8)
    states = np.empty((cfg.horizon, N), dtype=np.int64)
    for k in range(cfg.horizon):
        if int(tau.max()) + 1 >= cap:
            cap *= 2
            tables = [stage_cost_table(c, fp, cap) for c in caches]
        mask = greedy_step(tau, models, fp, Z, cost_tables=tables)
        schedule[k] = mask
        states[k] = tau
        tau = np.where(mask.astype(bool), 0, tau + 1)
    period = detect_period(schedule)
    return schedule, states, period
