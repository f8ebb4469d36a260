"""Activation-budget scheduling as an average-cost MDP over holding times.

State is the vector of per-sensor holding times (steps since last
transmission), truncated at tau_max with saturating growth; actions are
transmission subsets of size at most Z. Transitions are deterministic, so the
chain induced by any stationary policy is eventually periodic. The Bellman
equation is solved by relative value iteration; a damping (lazy-chain) factor
keeps the iteration convergent despite the deterministic, periodic dynamics.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from fairsched.models import (
    FairnessParam,
    SteadyStateCache,
    SystemModel,
    fair_cost,
    steady_state,
)


@dataclass(frozen=True)
class MdpConfig:
    """Truncation and convergence knobs for relative value iteration.

    damping is the lazy-chain mixing weight: each sweep blends the successor
    value with the current state's own value. Any value in (0, 1) leaves the
    average cost and the optimal policy unchanged while making the iteration
    converge on deterministic (periodic) dynamics.
    """

    tau_max: int = 12
    tol_span: float = 1e-8
    max_sweeps: int = 100_000
    damping: float = 0.5

    def __post_init__(self):
        if self.tau_max < 1:
            raise ValueError(f"tau_max must be >= 1, got {self.tau_max}")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError(f"damping must lie in [0, 1), got {self.damping}")


@dataclass
class ValueTable:
    """Relative values over the truncated state space, flat-indexed."""

    values: np.ndarray
    reference_index: int
    average_cost_estimate: float
    tau_max: int
    N: int
    converged: bool
    sweeps: int
    final_span: float

    def state_index(self, tau: tuple[int, ...]) -> int:
        idx = 0
        for t in tau:
            idx = idx * (self.tau_max + 1) + t
        return idx

    def value(self, tau: tuple[int, ...]) -> float:
        return float(self.values[self.state_index(tau)])


@dataclass
class StagePolicy:
    """Deterministic stationary policy: flat state index -> action index."""

    action_index: np.ndarray
    actions: np.ndarray
    tau_max: int
    N: int

    def decide(self, tau: tuple[int, ...]) -> tuple[int, ...]:
        idx = 0
        for t in tau:
            idx = idx * (self.tau_max + 1) + t
        return tuple(int(z) for z in self.actions[self.action_index[idx]])


def one_stage_cost(tau_i: int, cache: SteadyStateCache, fp: FairnessParam) -> float:
    """Incremental fairness cost of one more step at holding time tau_i.

    Defined so that the costs of a full hold-then-transmit segment of length d
    telescope to d * f_q(mean of the first d open-loop traces).
    """
    if tau_i < 0:
        raise ValueError(f"tau must be nonnegative, got {tau_i}")
    traces = cache.traces(tau_i + 1)
    if not np.all(np.isfinite(traces)):
        raise ValueError(f"non-finite trace at tau={tau_i} for {cache.sys.label!r}")
    head = (tau_i + 1) * fair_cost(float(np.mean(traces)), fp)
    if tau_i == 0:
        return head
    return head - tau_i * fair_cost(float(np.mean(traces[:-1])), fp)


def stage_cost_table(
    cache: SteadyStateCache, fp: FairnessParam, tau_max: int
) -> np.ndarray:
    """one_stage_cost for tau = 0..tau_max as a vector."""
    traces = cache.traces(tau_max + 1)
    means = np.cumsum(traces) / np.arange(1, tau_max + 2)
    fq = means ** (1.0 + fp.q) / (1.0 + fp.q)
    lengths = np.arange(1, tau_max + 2)
    out = lengths * fq
    out[1:] -= lengths[:-1] * fq[:-1]
    return out


def enumerate_actions(N: int, Z: int) -> np.ndarray:
    """All binary masks with at most Z ones, in lexicographic order."""
    if Z < 1 or Z > N:
        raise ValueError(f"need 1 <= Z <= N, got Z={Z}, N={N}")
    masks = [
        m
        for m in itertools.product((0, 1), repeat=N)
        if sum(m) <= Z
    ]
    masks.sort()
    return np.array(masks, dtype=np.int8)


def transition(
    phi: tuple[int, ...], a: tuple[int, ...], cfg: MdpConfig
) -> tuple[int, ...]:
    """Deterministic holding-time update: reset on transmit, else saturate."""
    if len(phi) != len(a):
        raise ValueError("state and action dimensions differ")
    return tuple(
        0 if z else min(t + 1, cfg.tau_max) for t, z in zip(phi, a)
    )


def _state_digits(S: int, N: int, base: int) -> np.ndarray:
    """Decompose flat indices 0..S-1 into N holding-time digits, shape (N, S)."""
    idx = np.arange(S)
    digits = np.empty((N, S), dtype=np.int64)
    for i in range(N - 1, -1, -1):
        digits[i] = idx % base
        idx //= base
    return digits


def _successor_table(actions: np.ndarray, tau_max: int) -> np.ndarray:
    """Flat successor index for every (action, state), shape (A, S)."""
    N = actions.shape[1]
    base = tau_max + 1
    S = base**N
    digits = _state_digits(S, N, base)
    weights = base ** np.arange(N - 1, -1, -1)
    succ = np.empty((len(actions), S), dtype=np.int64)
    for a_idx, mask in enumerate(actions):
        nxt = np.minimum(digits + 1, tau_max)
        nxt[mask.astype(bool)] = 0
        succ[a_idx] = weights @ nxt
    return succ


def _stage_costs_flat(
    caches: list[SteadyStateCache], fp: FairnessParam, tau_max: int
) -> np.ndarray:
    """Summed per-sensor stage costs for every flat state, shape (S,)."""
    N = len(caches)
    base = tau_max + 1
    S = base**N
    digits = _state_digits(S, N, base)
    cost = np.zeros(S)
    for i, cache in enumerate(caches):
        cost += stage_cost_table(cache, fp, tau_max)[digits[i]]
    return cost


def relative_value_iteration(
    models: list[SystemModel],
    fp: FairnessParam,
    Z: int,
    cfg: MdpConfig = MdpConfig(),
    caches: list[SteadyStateCache] | None = None,
) -> tuple[ValueTable, StagePolicy]:
    """Solve the truncated average-cost MDP and extract the greedy policy.

    Sweeps V(phi) <- min_a {c(phi) + V(succ(phi, a))}, subtracting the value
    of the all-zeros reference state each sweep, until the span of successive
    differences drops below tol_span. The subtracted reference term at
    convergence is the average-cost estimate. Argmin ties break to the
    lexicographically smallest action.
    """
    N = len(models)
    if caches is None:
        caches = [steady_state(m) for m in models]
    actions = enumerate_actions(N, Z)
    succ = _successor_table(actions, cfg.tau_max)
    cost = _stage_costs_flat(caches, fp, cfg.tau_max)
    S = cost.shape[0]
    ref = 0  # all-zeros state
    sigma = cfg.damping

    V = np.zeros(S)
    span = np.inf
    avg_cost = np.nan
    sweeps = 0
    converged = False
    for sweeps in range(1, cfg.max_sweeps + 1):
        M = V[succ[0]]
        for a_idx in range(1, len(actions)):
            np.minimum(M, V[succ[a_idx]], out=M)
        if sigma > 0.0:
            M = (1.0 - sigma) * M + sigma * V
        V_new = cost + M
        avg_cost = float(V_new[ref])
        V_new -= avg_cost
        diff = V_new - V
        span = float(diff.max() - diff.min())
        V = V_new
        # Span is compared relative to the average-cost scale: stage costs
        # grow like trace^(1+q), so an absolute threshold would never fire
        # for large q.
        if span <= cfg.tol_span * max(1.0, abs(avg_cost)):
            converged = True
            break

    # Policy: first (lexicographically smallest) action attaining the min.
    best = V[succ[0]].copy()
    choice = np.zeros(S, dtype=np.int32)
    for a_idx in range(1, len(actions)):
        cand = V[succ[a_idx]]
        better = cand < best
        best[better] = cand[better]
        choice[better] = a_idx

    table = ValueTable(
        values=V,
        reference_index=ref,
        average_cost_estimate=avg_cost,
        tau_max=cfg.tau_max,
        N=N,
        converged=converged,
        sweeps=sweeps,
        final_span=span,
    )
    policy = StagePolicy(
        action_index=choice, actions=actions, tau_max=cfg.tau_max, N=N
    )
    return table, policy


def rollout_policy(
    policy: StagePolicy,
    phi0: tuple[int, ...],
    horizon: int,
    caches: list[SteadyStateCache] | None = None,
    fp: FairnessParam | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Roll the deterministic policy forward from phi0.

    Returns the (horizon, N) action sequence and, when caches and fp are
    given, the running Cesaro average of the stage cost; otherwise the second
    array is empty.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    N = policy.N
    base = policy.tau_max + 1
    weights = base ** np.arange(N - 1, -1, -1)
    tau = np.asarray(phi0, dtype=np.int64)
    if np.any(tau < 0) or np.any(tau > policy.tau_max):
        raise ValueError("initial state outside the truncated state space")

    tables = None
    if caches is not None and fp is not None:
        tables = [stage_cost_table(c, fp, policy.tau_max) for c in caches]

    schedule = np.empty((horizon, N), dtype=np.int8)
    running_avg = np.empty(horizon if tables is not None else 0)
    total = 0.0
    for k in range(horizon):
        idx = int(weights @ tau)
        mask = policy.actions[policy.action_index[idx]]
        schedule[k] = mask
        if tables is not None:
            total += sum(tables[i][tau[i]] for i in range(N))
            running_avg[k] = total / (k + 1)
        tau = np.where(mask.astype(bool), 0, np.minimum(tau + 1, policy.tau_max))
    return schedule, running_avg


def detect_period(schedule: np.ndarray, min_repeats: int = 2):
    """Find the smallest (burn_in, period) with a_k = a_{k+L} for all k >= M.

    The candidate period must be verified over the entire recorded tail and
    the tail must cover at least min_repeats full periods. Returns None when
    no cycle fits within the recorded horizon.
    """
    seq = np.asarray(schedule)
    if seq.ndim == 1:
        seq = seq[:, None]
    T = len(seq)
    # Encode joint actions as integers for cheap comparison.
    codes = np.zeros(T, dtype=np.int64)
    for i in range(seq.shape[1]):
        codes = codes * 2 + seq[:, i]
    for L in range(1, T // max(min_repeats, 2) + 1):
        mism = np.nonzero(codes[: T - L] != codes[L:])[0]
        M = 0 if len(mism) == 0 else int(mism[-1]) + 1
        if T - M >= min_repeats * L:
            return M, L
    return None


def dump_value_table(table: ValueTable, policy: StagePolicy, path) -> None:
    """Write state tuple, relative value, and chosen action as flat text."""
    base = table.tau_max + 1
    N = table.N
    with open(path, "w") as fh:
        fh.write("state\tvalue\taction\n")
        for idx in range(len(table.values)):
            rem = idx
            tau = [0] * N
            for i in range(N - 1, -1, -1):
                tau[i] = rem % base
                rem //= base
            mask = policy.actions[policy.action_index[idx]]
            fh.write(
                ",".join(map(str, tau))
                + f"\t{table.values[idx]!r}\t"
                + ",".join(str(int(z)) for z in mask)
                + "\n"
            )
