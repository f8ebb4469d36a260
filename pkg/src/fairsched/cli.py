"""Batch experiment driver.

Runs the requested scheduling methods across a q sweep and writes plot-ready
CSV artifacts under out/{case}/{method}/q={value}/. Exit codes: 0 success,
1 config error, 2 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from fairsched.config import ConfigError, ExperimentConfig, parse_config
from fairsched.greedy import GreedyConfig, greedy_schedule
from fairsched.harness import (
    CostReport,
    Schedule,
    csv_header,
    entropy_measure,
    evaluate_schedule,
    gap_bounds,
    write_schedule_csv,
)
from fairsched.mdp import (
    detect_period,
    relative_value_iteration,
    rollout_policy,
    stage_cost_table,
)
from fairsched.models import FairnessParam, fair_cost, steady_state
from fairsched.rate import rate_cost, solve_rate_allocation


class NonConvergenceError(RuntimeError):
    pass


def _q_dir(base: Path, case: str, method: str, q: float) -> Path:
    d = base / case / method / f"q={q:g}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_report(path: Path, report: CostReport, method: str, q: float, N: int):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(csv_header(N))
        writer.writerow(report.csv_row(method, q))


def _run_rate_cell(cfg: ExperimentConfig, q: float, caches, out: Path) -> CostReport:
    fp = FairnessParam(q)
    r_star, trace = solve_rate_allocation(
        cfg.systems, cfg.R_total, fp, cfg.solver, caches=caches, record_every=100
    )
    trace.write_csv(out / "trace.csv")
    if not trace.converged:
        raise NonConvergenceError(f"rate solver did not converge at q={q}")
    per_J = np.array([rate_cost(ri, c) for ri, c in zip(r_star, caches)])
    report = CostReport(
        per_sensor_J=per_J,
        total_cost=float(per_J.sum()),
        q_objective=float(sum(fair_cost(j, fp) for j in per_J)),
        entropy_bits=entropy_measure(per_J),
    )
    # The subgradient solution is itself the rate-budget optimum.
    report.gap_lower_bound = report.q_objective
    report.relative_performance = 1.0
    _write_report(out / "report.csv", report, "subgradient", q, len(cfg.systems))
    with open(out / "rates.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"r_{i + 1}" for i in range(len(r_star))])
        writer.writerow([repr(float(r)) for r in r_star])
    return report


def _run_activation_cell(
    cfg: ExperimentConfig, method: str, q: float, caches, out: Path, g_star: float
) -> CostReport:
    fp = FairnessParam(q)
    N = len(cfg.systems)
    horizon = cfg.greedy.horizon
    if method == "mdp":
        table, policy = relative_value_iteration(
            cfg.systems, fp, cfg.Z, cfg.mdp, caches=caches
        )
        if not table.converged:
            raise NonConvergenceError(
                f"value iteration did not converge at q={q} (span {table.final_span:g})"
            )
        masks, _ = rollout_policy(policy, (0,) * N, horizon, caches=caches, fp=fp)
        period = detect_period(masks)
    else:
        masks, _, period = greedy_schedule(
            cfg.systems, fp, cfg.Z, GreedyConfig(horizon=horizon), caches=caches
        )
    schedule = Schedule.from_run(masks, period)
    report = evaluate_schedule(schedule, cfg.systems, fp, caches=caches, period=period)
    gap_bounds(report, cfg.systems, fp, cfg.Z, caches=caches, g_star=g_star)

    taus = _stage_taus(masks)
    tables = [
        stage_cost_table(caches[i], fp, int(taus[:, i].max())) for i in range(N)
    ]
    stage_costs = np.sum(
        [tables[i][taus[:, i]] for i in range(N)], axis=0
    )
    write_schedule_csv(out / "schedule.csv", masks[:1000], stage_costs[:1000])
    _write_report(out / "report.csv", report, method, q, N)
    return report


def _stage_taus(masks: np.ndarray) -> np.ndarray:
    from fairsched.harness import _holding_times

    return _holding_times(masks)


def run_experiment(cfg: ExperimentConfig) -> int:
    """Execute every (method, q) cell of the config; returns an exit code."""
    out_base = Path(cfg.output)
    caches = [steady_state(m) for m in cfg.systems]
    N = len(cfg.systems)

    if cfg.case == "rate":
        methods = ["subgradient"]
    elif cfg.method == "all":
        methods = ["mdp", "greedy"]
    else:
        methods = [cfg.method]

    rows = {}
    status = 0
    for q in cfg.q_values:
        fp = FairnessParam(q)
        g_star = None
        if cfg.case == "activation":
            r_star, trace = solve_rate_allocation(
                cfg.systems, float(cfg.Z), fp, cfg.solver, caches=caches
            )
            if not trace.converged:
                print(f"warning: lower-bound solver did not converge at q={q}")
                status = 2
                continue
            g_star = float(
                sum(fair_cost(rate_cost(ri, c), fp) for ri, c in zip(r_star, caches))
            )
        for method in methods:
            out = _q_dir(out_base, cfg.case, method, q)
            try:
                if cfg.case == "rate":
                    report = _run_rate_cell(cfg, q, caches, out)
                else:
                    report = _run_activation_cell(cfg, method, q, caches, out, g_star)
            except NonConvergenceError as exc:
                print(f"warning: {exc}")
                status = 2
                continue
            rows[(method, q)] = report

    _print_summary(rows, cfg.q_values, methods)
    return status


def _print_summary(rows, q_values, methods) -> None:
    cols = ["entropy", "total", "relative"]
    header = ["q"] + [f"{c}/{m}" for c in cols for m in methods]
    widths = [max(10, len(h) + 2) for h in header]
    print("".join(h.ljust(w) for h, w in zip(header, widths)))
    for q in q_values:
        cells = [f"{q:g}"]
        for c in cols:
            for m in methods:
                rep = rows.get((m, q))
                if rep is None:
                    cells.append("-")
                elif c == "entropy":
                    cells.append(f"{rep.entropy_bits:.2f}")
                elif c == "total":
                    cells.append(f"{rep.total_cost:.2f}")
                else:
                    rel = rep.relative_performance
                    cells.append("-" if rel is None else f"{rel:.2f}")
        print("".join(s.ljust(w) for s, w in zip(cells, widths)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairsched",
        description="Fairness-aware sensor transmission scheduling experiments.",
    )
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--case", choices=["rate", "activation"])
    parser.add_argument("--method", choices=["subgradient", "mdp", "greedy", "all"])
    parser.add_argument(
        "--q",
        action="append",
        type=float,
        help="fairness parameter; repeatable, overrides the config's q_values",
    )
    parser.add_argument("--seed", type=int)
    parser.add_argument("--tau-max", type=int, dest="tau_max")
    parser.add_argument("--max-iter", type=int, dest="max_iter")
    parser.add_argument("--out", help="output directory")
    return parser


def apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Command-line flags take precedence over config-file values."""
    from dataclasses import replace

    if args.case:
        cfg.case = args.case
    if args.method:
        cfg.method = args.method
    if args.q:
        cfg.q_values = list(args.q)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.solver = replace(cfg.solver, seed=args.seed)
    if args.tau_max is not None:
        cfg.mdp = replace(cfg.mdp, tau_max=args.tau_max)
    if args.max_iter is not None:
        cfg.solver = replace(cfg.solver, max_iter=args.max_iter)
    if args.out:
        cfg.output = args.out
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        cfg = apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
