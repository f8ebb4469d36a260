"""Exact schedule evaluation, fairness reporting, and brute-force oracles.

All costs here are deterministic functions of the transmission pattern: the
estimator covariance after tau silent steps is the tau-fold open-loop iterate
of the steady covariance, so periodic schedules are evaluated exactly over
one cycle and explicit ones by a horizon average. The two oracles
(exhaustive periodic cycles, exhaustive rate grids) exist to validate the MDP
and primal-dual solvers on small instances.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from fairsched.mdp import enumerate_actions, stage_cost_table
from fairsched.models import (
    FairnessParam,
    SteadyStateCache,
    SystemModel,
    fair_cost,
    steady_state,
)
from fairsched.rate import (
    MIN_RATE,
    SolverConfig,
    ThresholdPolicy,
    rate_cost,
    rate_cost_vector,
    realize_threshold_schedule,
    solve_rate_allocation,
)


@dataclass(frozen=True)
class Schedule:
    """A transmission pattern: explicit masks, or a prefix plus repeating cycle."""

    explicit: np.ndarray = None
    prefix: np.ndarray = None
    cycle: np.ndarray = None

    def __post_init__(self):
        if self.explicit is None and self.cycle is None:
            raise ValueError("provide either an explicit schedule or a cycle")
        if self.explicit is not None and self.cycle is not None:
            raise ValueError("explicit and periodic forms are mutually exclusive")
        if self.cycle is not None and len(self.cycle) == 0:
            raise ValueError("cycle must be nonempty")

    @property
    def is_periodic(self) -> bool:
        return self.cycle is not None

    @property
    def N(self) -> int:
        arr = self.explicit if self.explicit is not None else self.cycle
        return np.asarray(arr).shape[1]

    @classmethod
    def from_run(cls, masks: np.ndarray, period: tuple[int, int] | None) -> "Schedule":
        """Wrap a recorded run, splitting off the detected cycle when present."""
        masks = np.asarray(masks)
        if period is None:
            return cls(explicit=masks)
        M, L = period
        return cls(prefix=masks[:M], cycle=masks[M : M + L])


@dataclass
class CostReport:
    """Per-sensor and aggregate costs of one evaluated schedule."""

    per_sensor_J: np.ndarray
    total_cost: float
    q_objective: float
    entropy_bits: float
    gap_lower_bound: float = None
    relative_performance: float = None
    diverged: bool = False
    period: tuple[int, int] | None = None

    def csv_row(self, method: str, q: float) -> list:
        M, L = self.period if self.period is not None else ("", "")
        return (
            [method, q]
            + [repr(float(j)) for j in self.per_sensor_J]
            + [
                repr(self.total_cost),
                repr(self.entropy_bits),
                repr(self.q_objective),
                "" if self.gap_lower_bound is None else repr(self.gap_lower_bound),
                "" if self.relative_performance is None else repr(self.relative_performance),
                M,
                L,
            ]
        )


def csv_header(N: int) -> list[str]:
    return (
        ["method", "q"]
        + [f"J_{i + 1}" for i in range(N)]
        + ["total", "entropy_bits", "q_objective", "g_star", "ratio", "period_M", "period_L"]
    )


def entropy_measure(per_sensor_J) -> float:
    """Shannon entropy (bits) of the normalized per-sensor cost shares."""
    J = np.asarray(per_sensor_J, dtype=float)
    if np.any(~np.isfinite(J)) or np.any(J <= 0):
        raise ValueError("entropy requires strictly positive finite costs")
    p = J / J.sum()
    return float(-np.sum(p * np.log2(p)))


def _lyapunov_limit_trace(sys: SystemModel) -> float:
    """Trace of the open-loop covariance limit for a stable plant."""
    P = scipy.linalg.solve_discrete_lyapunov(sys.A, sys.Q)
    return float(np.trace(P))


def _holding_times(masks: np.ndarray) -> np.ndarray:
    """Per-step holding times, one column per sensor, virtual transmit at k=-1."""
    masks = np.asarray(masks)
    T, N = masks.shape
    steps = np.arange(T)[:, None]
    last = np.where(masks > 0, steps, -1)
    last = np.maximum.accumulate(last, axis=0)
    return steps - last  # last = -1 before any transmission: tau counts from 0


def _cycle_sensor_costs(
    cycle_col: np.ndarray, cache: SteadyStateCache, fp: FairnessParam
) -> tuple[float, float]:
    """Exact (J, q-objective) contributions of one sensor over one cycle.

    Uses the wrapped gap structure: each inter-transmission gap of length g
    contributes the first g open-loop traces to J and g * f_q(their mean) to
    the segmented objective.
    """
    L = len(cycle_col)
    ones = np.nonzero(cycle_col)[0]
    if len(ones) == 0:
        if cache.rho_A >= 1:
            return np.inf, np.inf
        J = _lyapunov_limit_trace(cache.sys)
        return J, fair_cost(J, fp)
    gaps = np.diff(np.concatenate([ones, [ones[0] + L]]))
    traces = cache.traces(int(gaps.max()))
    csum = np.cumsum(traces)
    J = float(sum(csum[g - 1] for g in gaps)) / L
    q_obj = float(sum(g * fair_cost(csum[g - 1] / g, fp) for g in gaps)) / L
    return J, q_obj


def evaluate_schedule(
    schedule: Schedule,
    models: list[SystemModel],
    fp: FairnessParam,
    caches: list[SteadyStateCache] | None = None,
    period: tuple[int, int] | None = None,
) -> CostReport:
    """Exact per-sensor time-average costs of a schedule.

    Periodic schedules are averaged over one cycle in closed form; explicit
    ones use the horizon average. An unstable sensor that is never scheduled
    gets an infinite cost and sets the diverged flag.
    """
    if caches is None:
        caches = [steady_state(m) for m in models]
    N = len(models)
    if schedule.N != N:
        raise ValueError(f"schedule has {schedule.N} sensors, models have {N}")

    per_J = np.empty(N)
    per_q = np.empty(N)
    if schedule.is_periodic:
        cyc = np.asarray(schedule.cycle)
        for i in range(N):
            per_J[i], per_q[i] = _cycle_sensor_costs(cyc[:, i], caches[i], fp)
        if period is None:
            pre = 0 if schedule.prefix is None else len(schedule.prefix)
            period = (pre, len(cyc))
    else:
        masks = np.asarray(schedule.explicit)
        taus = _holding_times(masks)
        for i in range(N):
            col = taus[:, i]
            tmax = int(col.max())
            if not masks[:, i].any() and caches[i].rho_A >= 1:
                per_J[i] = np.inf
                per_q[i] = np.inf
                continue
            traces = caches[i].traces(tmax + 1)
            per_J[i] = float(np.mean(traces[col]))
            # Stage-cost average: telescoped segment objective up to the
            # boundary term, which vanishes as the horizon grows.
            table = stage_cost_table(caches[i], fp, tmax)
            per_q[i] = float(np.mean(table[col]))

    diverged = bool(np.any(~np.isfinite(per_J)))
    total = float(np.sum(per_J))
    q_obj = float(np.sum(per_q))
    entropy = (
        entropy_measure(per_J) if not diverged and np.all(per_J > 0) else np.nan
    )
    return CostReport(
        per_sensor_J=per_J,
        total_cost=total,
        q_objective=q_obj,
        entropy_bits=entropy,
        diverged=diverged,
        period=period,
    )


def segment_objective(
    masks: np.ndarray,
    models: list[SystemModel],
    fp: FairnessParam,
    T: int | None = None,
    caches: list[SteadyStateCache] | None = None,
) -> float:
    """Segmented convexified objective of an explicit schedule over [0, T].

    Splits each sensor's timeline at its transmissions (the final segment
    runs to T) and averages f_q of the per-segment mean traces, weighted by
    segment length. Requires every sensor to transmit at least once.
    """
    masks = np.asarray(masks)
    if T is None:
        T = len(masks) - 1
    if caches is None:
        caches = [steady_state(m) for m in models]
    total = 0.0
    for i in range(len(models)):
        s = np.nonzero(masks[: T + 1, i])[0]
        if len(s) == 0:
            raise ValueError(
                f"sensor {i} never transmits within the horizon; segments undefined"
            )
        d = np.diff(np.concatenate([s, [T]]))
        d = d[d > 0]
        traces = caches[i].traces(int(d.max()) if len(d) else 1)
        csum = np.cumsum(traces)
        total += float(sum(dj * fair_cost(csum[dj - 1] / dj, fp) for dj in d))
    return total / (T + 1)


def gap_bounds(
    report: CostReport,
    models: list[SystemModel],
    fp: FairnessParam,
    Z: int,
    solver_cfg: SolverConfig = SolverConfig(),
    caches: list[SteadyStateCache] | None = None,
    g_star: float | None = None,
) -> tuple[float, float]:
    """Lower bound g_star (rate optimum at budget Z) and the achieved ratio."""
    if g_star is None:
        if caches is None:
            caches = [steady_state(m) for m in models]
        r_star, trace = solve_rate_allocation(
            models, float(Z), fp, solver_cfg, caches=caches
        )
        if not trace.converged:
            raise RuntimeError("rate solver did not converge; no valid lower bound")
        g_star = float(
            sum(fair_cost(rate_cost(ri, c), fp) for ri, c in zip(r_star, caches))
        )
    ratio = report.q_objective / g_star
    report.gap_lower_bound = g_star
    report.relative_performance = ratio
    return g_star, ratio


def brute_force_periodic_oracle(
    models: list[SystemModel],
    fp: FairnessParam,
    Z: int,
    max_period: int = 12,
    caches: list[SteadyStateCache] | None = None,
) -> tuple[float, np.ndarray]:
    """Exhaustive search over short periodic schedules.

    Enumerates every cycle of feasible actions up to max_period, evaluates
    each exactly by its cycle average of the segmented objective, and returns
    the minimum. A sensor left silent for the whole cycle contributes its
    open-loop limit cost when stable and infinity when unstable (such cycles
    never win). Small instances only.
    """
    N = len(models)
    if N > 3 or max_period > 12:
        raise ValueError("oracle limited to N <= 3 and max_period <= 12")
    if caches is None:
        caches = [steady_state(m) for m in models]
    actions = enumerate_actions(N, Z)
    A = len(actions)
    if A**max_period > 2 * 10**7:
        raise ValueError(
            f"instance too large: {A}^{max_period} cycles exceed the enumeration cap"
        )
    tables = [stage_cost_table(c, fp, 2 * max_period + 2) for c in caches]
    silent_cost = np.array(
        [
            np.inf
            if c.rho_A >= 1
            else fair_cost(_lyapunov_limit_trace(c.sys), fp)
            for c in caches
        ]
    )
    action_bits = actions.astype(bool)  # (A, N)

    best_val = np.inf
    best_cycle = None
    chunk_size = 250_000
    for L in range(1, max_period + 1):
        n_cycles = A**L
        place = A ** np.arange(L - 1, -1, -1, dtype=np.int64)
        for start in range(0, n_cycles, chunk_size):
            codes = np.arange(start, min(start + chunk_size, n_cycles))
            combos = (codes[:, None] // place) % A  # (M, L) action indices
            total = np.zeros(len(combos))
            for i in range(N):
                B = action_bits[combos, i]  # (M, L) transmission pattern
                D = np.concatenate([B, B], axis=1)  # wrap: steady holding times
                pos = np.where(D, np.arange(2 * L)[None, :], -1)
                last = np.maximum.accumulate(pos, axis=1)[:, L:]
                silent = last[:, -1] < 0
                tau = np.arange(L, 2 * L)[None, :] - last
                tau = np.clip(tau, 0, 2 * max_period + 2)
                cost_i = np.mean(tables[i][tau], axis=1)
                total += np.where(silent, silent_cost[i], cost_i)
            if total.min() < best_val:
                j = int(np.argmin(total))
                best_val = float(total[j])
                best_cycle = actions[combos[j]]
    return best_val, best_cycle


def grid_search_rate_oracle(
    models: list[SystemModel],
    fp: FairnessParam,
    R_total: float,
    step: float = 1e-3,
    epsilon: float = 1e-3,
    caches: list[SteadyStateCache] | None = None,
) -> tuple[float, np.ndarray]:
    """Exhaustive grid search over feasible rate vectors.

    The last coordinate is completed to its maximal feasible value given the
    others, which is optimal because every per-sensor cost is nonincreasing
    in its own rate; the remaining coordinates are swept on the grid.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    N = len(models)
    if N > 3:
        raise ValueError("oracle limited to N <= 3")
    if caches is None:
        caches = [steady_state(m) for m in models]
    r_lower = np.array([0.0 if c.rho_A < 1 else epsilon for c in caches])

    if N == 1:
        r = np.array([min(1.0, R_total)])
        val = fair_cost(rate_cost(r[0], caches[0]), fp)
        return float(val), r

    # Each axis is the regular grid plus the sensor's exact rate floor: the
    # floor itself is always a feasible boundary candidate, and for stable
    # sensors it lies below the first grid point.
    floors = np.maximum(r_lower, MIN_RATE)
    axes = [
        np.unique(
            np.concatenate(
                [[floors[i]], np.arange(max(r_lower[i], step), 1.0 + step / 2, step)]
            )
        )
        for i in range(N - 1)
    ]
    grids = np.meshgrid(*axes, indexing="ij")
    flat = np.stack([g.ravel() for g in grids], axis=1)  # (M, N-1)
    r_last = np.minimum(1.0, R_total - flat.sum(axis=1))
    feas = r_last >= floors[-1]
    flat = flat[feas]
    r_last = r_last[feas]
    if len(flat) == 0:
        raise ValueError("no feasible grid point; budget too small for the floors")

    total = np.zeros(len(flat))
    for i in range(N - 1):
        J = rate_cost_vector(flat[:, i], caches[i])
        total += J ** (1.0 + fp.q) / (1.0 + fp.q)
    J = rate_cost_vector(r_last, caches[-1])
    total += J ** (1.0 + fp.q) / (1.0 + fp.q)
    j = int(np.nanargmin(total))
    best = np.concatenate([flat[j], [r_last[j]]])
    return float(total[j]), best


def monte_carlo_state_check(
    sys: SystemModel,
    policy: ThresholdPolicy,
    trials: int = 10_000,
    horizon: int = 50,
    seed: int = 0,
) -> float:
    """Cross-check the covariance recursion against sampled squared errors.

    Simulates state/measurement trajectories, runs the steady-state Kalman
    filter at each sensor and the hold-and-predict remote estimator under one
    realized transmission schedule shared across trials, and returns the
    maximum relative deviation between the empirical error second moment and
    the predicted open-loop trace over the horizon.
    """
    if trials < 10**3:
        raise ValueError(f"need at least 1000 trials, got {trials}")
    rng = np.random.default_rng(seed)
    cache = steady_state(sys)
    zeta = realize_threshold_schedule(policy, horizon, seed=seed + 1)

    n, m = sys.n, sys.C.shape[0]
    sqQ = np.linalg.cholesky(sys.Q + 1e-15 * np.eye(n))
    sqR = np.linalg.cholesky(sys.R_meas)
    sqP = np.linalg.cholesky(cache.P_bar + 1e-15 * np.eye(n))
    # Steady-state filter gain for the prediction covariance h(P_bar).
    P_pred = sys.A @ cache.P_bar @ sys.A.T + sys.Q
    S = sys.C @ P_pred @ sys.C.T + sys.R_meas
    K = np.linalg.solve(S.T, (P_pred @ sys.C.T).T).T

    # Start at steady state: local error covariance P_bar at k=0, estimator
    # synchronized as if a transmission happened at k=-1.
    x_local = np.zeros((trials, n))
    x = x_local + rng.standard_normal((trials, n)) @ sqP.T
    x_remote = x_local.copy()

    max_dev = 0.0
    tau = 0
    predicted_trace_eps = 1e-12
    for k in range(horizon):
        x = x @ sys.A.T + rng.standard_normal((trials, n)) @ sqQ.T
        y = x @ sys.C.T + rng.standard_normal((trials, m)) @ sqR.T
        x_pred = x_local @ sys.A.T
        x_local = x_pred + (y - x_pred @ sys.C.T) @ K.T
        if zeta[k]:
            x_remote = x_local.copy()
            tau = 0
        else:
            x_remote = x_remote @ sys.A.T
            tau += 1
        err = x - x_remote
        emp = float(np.mean(np.sum(err * err, axis=1)))
        pred = cache.trace(tau)
        if pred > predicted_trace_eps:
            max_dev = max(max_dev, abs(emp - pred) / pred)
        else:
            max_dev = max(max_dev, abs(emp - pred))
    return max_dev


def write_schedule_csv(path, masks: np.ndarray, stage_costs: np.ndarray) -> None:
    """Trajectory dump: step, per-sensor transmissions, stage cost."""
    masks = np.asarray(masks)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["k"] + [f"zeta_{i + 1}" for i in range(masks.shape[1])] + ["stage_cost"]
        )
        for k in range(len(masks)):
            c = "" if stage_costs is None else repr(float(stage_costs[k]))
            writer.writerow([k] + [int(z) for z in masks[k]] + [c])
