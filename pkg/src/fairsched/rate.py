"""Rate-budget scheduling: piecewise-linear costs and the primal-dual solver.

Under a long-run transmission-rate budget, the best single-sensor policy at a
given rate is a randomized holding-time threshold rule, and the induced
per-sensor cost is a piecewise-linear, nonincreasing, convex function of the
rate. Allocating rates across sensors is then a convex program solved here by
an augmented primal-dual subgradient iteration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from fairsched.models import (
    FairnessParam,
    SteadyStateCache,
    SystemModel,
    fair_cost,
    steady_state,
)

FLOOR_GUARD = 1e-12
# Smallest rate any iterate is allowed to take: beta = floor(1/r) must stay
# finite and within the cached trace range even for stable sensors whose
# lower bound is zero.
MIN_RATE = 1.25e-4


@dataclass(frozen=True)
class ThresholdPolicy:
    """Randomized threshold rule (eta, p) realizing rate 1/(eta + 2 - p).

    Hold for eta steps after a transmission, transmit with probability p at
    holding time eta, always transmit beyond it.
    """

    eta: int
    p: float

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")

    @property
    def rate(self) -> float:
        return 1.0 / (self.eta + 2 - self.p)


@dataclass(frozen=True)
class ConstraintSystem:
    """Stacked linear constraints A_con r <= b_con for the rate program."""

    A_con: np.ndarray
    b_con: np.ndarray
    R_total: float
    r_lower: np.ndarray

    @property
    def N(self) -> int:
        return self.A_con.shape[1]


@dataclass(frozen=True)
class SolverConfig:
    """Tuning knobs of the primal-dual subgradient iteration.

    gamma(t) = gamma0 / t is square-summable but not summable, as the
    convergence argument requires.
    """

    alpha: float = 1000.0
    gamma0: float = 3.0
    max_iter: int = 30_000
    tol_violation: float = 1e-6
    tol_objective: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0 or self.gamma0 <= 0:
            raise ValueError("alpha and gamma0 must be positive")


@dataclass
class ConvergenceTrace:
    """Per-iteration record of the solver run."""

    iters: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    violation: list = field(default_factory=list)
    step_size: list = field(default_factory=list)
    converged: bool = False

    def append(self, t: int, obj: float, viol: float, w: float) -> None:
        self.iters.append(t)
        self.objective.append(obj)
        self.violation.append(viol)
        self.step_size.append(w)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "objective", "violation_norm", "step_size"])
            for row in zip(self.iters, self.objective, self.violation, self.step_size):
                writer.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])


def threshold_from_rate(r_i: float) -> ThresholdPolicy:
    """Threshold rule whose long-run transmission rate equals r_i."""
    if r_i <= 0 or r_i > 1:
        raise ValueError(f"rate must lie in (0, 1], got {r_i}")
    inv = 1.0 / r_i
    eta = int(np.floor(inv - 1 + FLOOR_GUARD))
    p = eta + 2 - inv
    # Round-off can push p marginally outside (0, 1].
    p = min(max(p, FLOOR_GUARD), 1.0)
    return ThresholdPolicy(eta=eta, p=p)


def _beta(r_i: float) -> int:
    return int(np.floor(1.0 / r_i + FLOOR_GUARD))


def rate_cost(r_i: float, cache: SteadyStateCache) -> float:
    """Long-run average estimation-error trace at transmission rate r_i.

    Piecewise linear in r_i with breakpoints at reciprocals of integers:
    with b = floor(1/r), the cost is
    (1 - r*b) * trace(b) + r * sum_{j<b} trace(j).
    """
    if r_i <= 0 or r_i > 1:
        raise ValueError(f"rate must lie in (0, 1], got {r_i}")
    b = _beta(r_i)
    head = cache.head_sum(b)
    coeff = 1.0 - r_i * b
    # coeff == 0 at exact breakpoints; skip the (possibly infinite) tail term.
    tail = 0.0 if abs(coeff) < FLOOR_GUARD else coeff * cache.trace(b)
    return tail + r_i * head


def rate_cost_vector(r: np.ndarray, cache: SteadyStateCache) -> np.ndarray:
    """Vectorized rate_cost over an array of rates for one sensor."""
    r = np.asarray(r, dtype=float)
    b = np.floor(1.0 / r + FLOOR_GUARD).astype(int)
    b_max = int(b.max())
    traces = cache.traces(b_max + 1)
    csum = np.concatenate([[0.0], np.cumsum(traces)])
    coeff = 1.0 - r * b
    at_break = np.abs(coeff) < FLOOR_GUARD
    tail_trace = traces[b]
    tail = np.where(at_break, 0.0, coeff * np.where(at_break, 0.0, tail_trace))
    return tail + r * csum[b]


KAPPA_CLIP = 1e12


def subgradient(
    r: np.ndarray,
    caches: list[SteadyStateCache],
    fp: FairnessParam,
    scale: float = 1.0,
) -> np.ndarray:
    """One subgradient of the fairness objective at the rate vector r.

    Component i is J_i(r_i)^q times the slope of the piecewise-linear cost on
    its current piece; always nonpositive.

    With scale = c, the subgradient of the rescaled objective sum f_q(c J_i)
    is returned instead, computed stably as (c J)^q (c slope); rescaling by a
    constant c > 0 leaves the minimizer unchanged. Magnitudes are clipped at
    KAPPA_CLIP so a transient visit to a near-floor rate (where J is
    astronomically large but finite) cannot overflow the step direction.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("all rates must be positive")
    kappa = np.empty(len(r))
    for i, (r_i, cache) in enumerate(zip(r, caches)):
        b = _beta(r_i)
        slope = cache.head_sum(b) - b * cache.trace(b)
        if not np.isfinite(slope):
            raise ValueError(
                f"non-finite trace at rate {r_i} for {cache.sys.label!r}; "
                "the rate floor is set too low for this unstable system"
            )
        with np.errstate(over="ignore"):
            val = (scale * rate_cost(r_i, cache)) ** fp.q * (scale * slope)
        kappa[i] = max(val, -KAPPA_CLIP) if np.isfinite(val) else -KAPPA_CLIP
    return kappa


def build_constraints(
    models: list[SystemModel],
    R_total: float,
    epsilon: float = 1e-3,
    caches: list[SteadyStateCache] | None = None,
) -> ConstraintSystem:
    """Assemble the budget, upper-bound, and lower-bound constraint rows.

    Unstable sensors get a small positive rate floor epsilon so their cost
    (and its subgradient) stays bounded; stable sensors get floor zero.
    """
    if R_total <= 0:
        raise ValueError(f"R_total must be positive, got {R_total}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    N = len(models)
    if caches is None:
        rho = [abs(np.max(np.abs(np.linalg.eigvals(m.A)))) for m in models]
    else:
        rho = [c.rho_A for c in caches]
    r_lower = np.array([0.0 if rho_i < 1 else epsilon for rho_i in rho])
    A_con = np.vstack([np.ones((1, N)), np.eye(N), -np.eye(N)])
    b_con = np.concatenate([[R_total], np.ones(N), -r_lower])
    return ConstraintSystem(A_con=A_con, b_con=b_con, R_total=R_total, r_lower=r_lower)


def primal_dual_step(
    r: np.ndarray,
    nu: np.ndarray,
    t: int,
    cfg: SolverConfig,
    con: ConstraintSystem,
    caches: list[SteadyStateCache],
    fp: FairnessParam,
    obj_scale: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """One normalized primal-descent / dual-ascent step at iteration t >= 1.

    The joint update moves (r, nu) against the saddle mapping
    T = [dg + A^T nu + alpha A^T (A r - b)_+ ; b - A r], so nu moves by
    +w (A r - b). Afterwards r is clamped to its box and nu to >= 0.

    obj_scale rescales the per-sensor costs inside the subgradient; scaling
    the objective by a positive constant leaves the minimizer unchanged and
    is used to keep kappa (which grows like J^q) comparable to the
    constraint terms.
    """
    if t < 1:
        raise ValueError(f"iteration index must be >= 1, got {t}")
    slack = con.A_con @ r - con.b_con
    primal_block = (
        subgradient(r, caches, fp, scale=obj_scale)
        + con.A_con.T @ nu
        + cfg.alpha * con.A_con.T @ np.maximum(slack, 0.0)
    )
    dual_block = -slack
    norm = float(np.sqrt(np.sum(primal_block**2) + np.sum(dual_block**2)))
    if norm == 0.0:
        return r, nu
    w = (cfg.gamma0 / t) / norm
    r_next = np.clip(r - w * primal_block, np.maximum(con.r_lower, MIN_RATE), 1.0)
    nu_next = np.maximum(nu - w * dual_block, 0.0)
    return r_next, nu_next


def project_feasible(r: np.ndarray, con: ConstraintSystem) -> np.ndarray:
    """Euclidean projection of r onto {sum r <= R_total, max(r_lower, MIN_RATE) <= r <= 1}.

    Box-clamp first; if the budget is still exceeded, shift all coordinates
    down by a common lambda (re-clamping into the box), found by bisection.
    """
    lo = np.maximum(con.r_lower, MIN_RATE)
    out = np.clip(r, lo, 1.0)
    if out.sum() <= con.R_total + 1e-15:
        return out
    hi_lam = float(np.max(out - lo))
    lo_lam = 0.0
    for _ in range(100):
        lam = 0.5 * (lo_lam + hi_lam)
        cand = np.clip(r - lam, lo, 1.0)
        if cand.sum() > con.R_total:
            lo_lam = lam
        else:
            hi_lam = lam
    return np.clip(r - hi_lam, lo, 1.0)


def solve_rate_allocation(
    models: list[SystemModel],
    R_total: float,
    fp: FairnessParam,
    cfg: SolverConfig = SolverConfig(),
    epsilon: float = 1e-3,
    caches: list[SteadyStateCache] | None = None,
    record_every: int = 1,
) -> tuple[np.ndarray, ConvergenceTrace]:
    """Allocate transmission rates minimizing the summed fairness cost.

    Runs the primal-dual subgradient iteration and returns the best feasible
    iterate together with the per-iteration convergence trace. A run is
    flagged non-converged when max_iter is exhausted before the constraint
    violation drops below tol_violation.
    """
    if caches is None:
        caches = [steady_state(m) for m in models]
    con = build_constraints(models, R_total, epsilon, caches=caches)
    rng = np.random.default_rng(cfg.seed)
    lo = np.maximum(con.r_lower, MIN_RATE)
    r = project_feasible(rng.uniform(np.maximum(con.r_lower, 0.05), 1.0), con)
    nu = np.zeros(con.A_con.shape[0])
    trace = ConvergenceTrace()

    def objective(rv: np.ndarray) -> float:
        return float(
            sum(fair_cost(rate_cost(ri, c), fp) for ri, c in zip(rv, caches))
        )

    # Condition the saddle dynamics: kappa grows like J^q, which for large q
    # dwarfs the constraint terms and the reachable dual range. Scaling the
    # objective by a positive constant does not move its minimizer, so use
    # the scale that makes the steepest kappa component O(1); it is refreshed
    # periodically because the relevant J magnitude shifts as the iterate
    # moves (the refresh changes only the conditioning, not the program).
    def ref_scale(rv: np.ndarray) -> float:
        j_ref = max(float(rate_cost(ri, c)) for ri, c in zip(rv, caches))
        return 1.0 / j_ref if np.isfinite(j_ref) and j_ref > 0 else 1.0

    obj_scale = ref_scale(r)
    rescale_every = 50

    best_obj = np.inf
    best_r = r.copy()
    stall = 0
    eval_every = 5
    window = 20_000
    avg_acc = np.zeros(con.N)
    avg_w = 0.0
    for t in range(1, cfg.max_iter + 1):
        if t % rescale_every == 0:
            obj_scale = ref_scale(r)
        r, nu = primal_dual_step(r, nu, t, cfg, con, caches, fp, obj_scale=obj_scale)
        viol = float(np.linalg.norm(np.maximum(con.A_con @ r - con.b_con, 0.0)))
        # Ergodic (step-weighted) average over a sliding window; the
        # convergence guarantee of the subgradient iteration is for this
        # average, and it smooths the orbiting of the raw saddle iterate.
        gamma_t = cfg.gamma0 / t
        avg_acc += gamma_t * r
        avg_w += gamma_t
        if t % window == 0:
            avg_acc[:] = gamma_t * r
            avg_w = gamma_t
        if t % record_every == 0 or t == cfg.max_iter:
            trace.append(t, objective(r), viol, gamma_t)
        if t % eval_every == 0 or t == cfg.max_iter:
            # The raw iterate may still carry a small budget violation; its
            # feasible projection is always a valid candidate, as is the
            # projected ergodic average.
            cands = [r if viol <= cfg.tol_violation else project_feasible(r, con)]
            if avg_w > 0:
                cands.append(project_feasible(avg_acc / avg_w, con))
            improved = False
            for cand in cands:
                obj = objective(cand)
                if np.isfinite(best_obj):
                    accept = obj < best_obj - cfg.tol_objective * max(1.0, abs(best_obj))
                else:
                    accept = np.isfinite(obj)
                if accept:
                    best_obj = obj
                    best_r = cand.copy()
                    improved = True
            stall = 0 if improved else stall + 1
            # The normalized 1/t step keeps shrinking; once thousands of
            # candidates fail to improve the incumbent, stop early.
            if stall >= 2000 and t >= 15_000:
                trace.converged = True
                break
    else:
        trace.converged = best_obj < np.inf
    if not np.isfinite(best_obj):
        best_r = r.copy()
        trace.converged = False
    return best_r, trace


def realize_threshold_schedule(
    policy: ThresholdPolicy, horizon: int, seed: int
) -> np.ndarray:
    """Sample a binary transmission sequence of the threshold rule.

    The rule is a renewal process: consecutive transmissions are separated by
    eta+1 steps with probability p and eta+2 steps otherwise, with the clock
    starting as if a transmission happened at step -1. Reproducible per seed.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    rng = np.random.default_rng(seed)
    zeta = np.zeros(horizon, dtype=np.int8)
    min_gap = policy.eta + 1
    # Enough gaps to cover the horizon with slack; top up in the rare shortfall.
    est = int(horizon / min_gap) + 16
    times = np.array([], dtype=np.int64)
    last = -1
    while last < horizon - 1:
        if policy.p >= 1.0:
            gaps = np.full(est, min_gap, dtype=np.int64)
        else:
            gaps = min_gap + (rng.random(est) >= policy.p).astype(np.int64)
        new_times = last + np.cumsum(gaps)
        times = np.concatenate([times, new_times])
        last = int(times[-1])
        est = max(16, int((horizon - 1 - last) / min_gap) + 16)
    times = times[times < horizon]
    zeta[times] = 1
    return zeta
