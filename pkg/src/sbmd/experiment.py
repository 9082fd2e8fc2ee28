"""Seeded multi-trial experiment runner with CSV and JSON output.

Trial ``t`` runs with seed ``base_seed + t``; inside a trial the solver derives
its block, sample and output streams from that seed (see ``solvers.make_streams``).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache

import numpy as np

from .analysis import BoundSpec, aggregate, bound_value, rate_fit
from .config import ExperimentConfig
from .core import bregman
from .errors import ParameterError, TrialFailure
from .plans import (
    plan_composite, plan_composite_strongly, plan_nonconvex, plan_nonsmooth_a, plan_nonsmooth_b,
    plan_strongly, recommended_D_tilde,
)
from .problems import StochasticProblem, make_problem
from .solvers import md_sa_run, sbmd_composite_run, sbmd_nonconvex_run, sbmd_run

CSV_HEADER = ("algorithm", "problem", "trial", "seed", "N", "k", "gap", "pg_norm_sq", "samples_used", "wall_ms")


@lru_cache(maxsize=8)
def _cached_problem(name: str, params_json: str) -> StochasticProblem:
    return make_problem(name, **json.loads(params_json))


def problem_for(cfg: ExperimentConfig) -> StochasticProblem:
    return _cached_problem(cfg.problem, json.dumps(cfg.problem_params, sort_keys=True))


def start_point(cfg: ExperimentConfig, problem: StochasticProblem) -> np.ndarray:
    """Configured ``x1`` (a scalar broadcasts), else the minimizer of the distance generating function."""
    if cfg.x1 is None:
        return problem.setup.argmin_omega()
    return np.broadcast_to(np.asarray(cfg.x1, dtype=float), (problem.structure.n,)).copy()


def distance_to_opt(problem: StochasticProblem, x1: np.ndarray) -> float:
    """``sum_i V_i(x_1, x*)``."""
    st = problem.structure
    return float(sum(bregman(problem.setup, i, x1[st.slice(i)], problem.x_star[st.slice(i)]) for i in range(st.b)))


def auto_minibatch(problem: StochasticProblem, x1: np.ndarray, N: int) -> int:
    """``T = ceil(b sigma^2 / eps)`` with the deterministic target ``eps = 2 b L_bar Delta / N``."""
    if problem.sigma_sq == 0:
        return 1
    b = problem.structure.b
    eps = 2.0 * b * problem.L_bar * problem.gap(x1) / N
    if eps <= 0:
        raise ParameterError("x1 is already optimal; the minibatch rule is undefined")
    return max(1, math.ceil(b * problem.sigma_sq / eps))


def build_plan(cfg: ExperimentConfig, problem: StochasticProblem, x1: np.ndarray, N: int):
    """Stepsize plan, bound constants (or ``None``) and minibatch size for horizon ``N``."""
    b = problem.structure.b
    setup = problem.setup
    kind = cfg.plan
    T = None
    if kind == "nonsmooth-a":
        plan = plan_nonsmooth_a(setup.D, problem.M, N)
        spec = BoundSpec("nonsmooth-a", D=setup.D, M=problem.M)
    elif kind == "nonsmooth-b":
        if cfg.D_tilde is None:
            D_tilde = recommended_D_tilde(setup.D)
            spec = BoundSpec("nonsmooth-b-optimalD", b=b, D=setup.D, M=problem.M)
        else:
            D_tilde = cfg.D_tilde
            spec = BoundSpec("nonsmooth-b", b=b, M=problem.M, V=distance_to_opt(problem, x1), D_tilde=D_tilde)
        plan = plan_nonsmooth_b(D_tilde, problem.M, b, N)
    elif kind == "strongly-convex":
        plan = plan_strongly(b, setup.Q, problem.mu, N)
        spec = BoundSpec("strongly", b=b, Q=setup.Q, mu=problem.mu, M=problem.M)
    elif kind == "composite":
        V = distance_to_opt(problem, x1)
        D_tilde = cfg.D_tilde if cfg.D_tilde is not None else math.sqrt(V) if V > 0 else 1.0
        sigma = math.sqrt(problem.sigma_sq)
        L_bar = problem.L_bar * cfg.L_scale
        plan = plan_composite(b, L_bar, sigma, D_tilde, N)
        spec = BoundSpec(
            "composite", b=b, L_bar=L_bar, Delta=problem.gap(x1), V=V, sigma=sigma, D_tilde=D_tilde,
        )
    elif kind == "composite-strongly":
        L_bar = problem.L_bar * cfg.L_scale
        plan = plan_composite_strongly(b, setup.Q, problem.mu, L_bar, N)
        spec = BoundSpec(
            "composite-strongly", b=b, Q=setup.Q, mu=problem.mu, k0=plan.meta["k0"],
            Delta=problem.gap(x1), V=distance_to_opt(problem, x1), sigma=math.sqrt(problem.sigma_sq),
        )
    elif kind == "nonconvex":
        L = tuple(l * cfg.L_scale for l in problem.L)
        plan = plan_nonconvex(L, None, N)
        T = cfg.T if cfg.T is not None else auto_minibatch(problem, x1, N)
        if problem.sigma_sq == 0:
            spec = BoundSpec("nonconvex-det", b=b, L_bar=max(L), Delta=problem.gap(x1))
        else:
            spec = BoundSpec(
                "nonconvex-stoch", b=b, L_bar=max(L), Delta=problem.gap(x1), sigma=math.sqrt(problem.sigma_sq), T=T,
            )
    else:
        raise ParameterError(f"unknown plan kind {kind!r}")
    if cfg.algorithm == "md-sa":
        spec = None
    return plan, spec, T


def run_single(cfg: ExperimentConfig, trial: int, N: int):
    """Run one (trial, N) cell; returns its CSV rows and the :class:`RunRecord`."""
    problem = problem_for(cfg)
    x1 = start_point(cfg, problem)
    seed = cfg.seed + trial
    plan, _, T = build_plan(cfg, problem, x1, N)
    cps = [N] if cfg.checkpoints == "final" else None
    try:
        if cfg.algorithm == "md-sa":
            rec = md_sa_run(problem, plan.gamma, plan.theta, x1, N, seed, checkpoints=cps)
        elif cfg.plan == "nonconvex":
            rec = sbmd_nonconvex_run(problem, plan, x1, N, T, seed, checkpoints=cps)
        elif cfg.plan in ("composite", "composite-strongly"):
            rec = sbmd_composite_run(problem, plan, x1, N, seed, checkpoints=cps)
        else:
            rec = sbmd_run(problem, plan, x1, N, seed, checkpoints=cps)
    except Exception as e:  # noqa: BLE001 -- any failure is reported with its seed
        raise TrialFailure(seed, N, e) from e
    rows = [
        (rec.algorithm, cfg.problem, trial, seed, N, c.k, c.gap, c.pg_norm_sq, c.samples_used, c.wall_ms)
        for c in rec.checkpoints
    ]
    rec.trajectory = None
    return rows, rec


def _task(args):
    cfg, trial, N = args
    return trial, N, run_single(cfg, trial, N)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def run_trials(cfg: ExperimentConfig, jobs: int = 1):
    """All (trial, N) cells, sorted by (trial, N); returns ``(rows, records)``."""
    tasks = [(cfg, t, N) for t in range(cfg.trials) for N in cfg.N_grid]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_task(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))
    rows = [row for _, _, (rs, _) in results for row in sorted(rs, key=lambda r: r[5])]
    records = [rec for _, _, (_, rec) in results]
    return rows, records


def summarize_experiment(cfg: ExperimentConfig, records) -> dict:
    """JSON-ready summary: per-N statistics, bound values, dominance and rate-fit flags."""
    problem = problem_for(cfg)
    x1 = start_point(cfg, problem)
    nonconvex = cfg.plan == "nonconvex"
    metric = "output_pg_norm_sq" if nonconvex else "gap"
    per_N, prev = [], None
    dominance = True
    by_N = {N: [r for r in records if r.N == N] for N in cfg.N_grid}
    for N in cfg.N_grid:
        recs = by_N[N]
        vals = np.array([r.output_pg_norm_sq if nonconvex else r.final_gap for r in recs], dtype=float)
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else None
        _, spec, T = build_plan(cfg, problem, x1, N)
        bound = None
        if spec is not None and not (spec.kind.startswith("composite") and N < 2):
            bound = bound_value(spec, N)
        ok = None if bound is None else bool(mean <= bound + 2.0 * (se or 0.0))
        if ok is False:
            dominance = False
        entry = {
            "N": N,
            "metric": metric,
            "mean": mean,
            "se": se,
            "quantiles": {str(q): float(np.quantile(vals, q)) for q in (0.1, 0.25, 0.5, 0.75, 0.9)},
            "bound": bound,
            "dominance_pass": ok,
            "ratio_to_previous": None if prev is None or prev == 0 else mean / prev,
            "minibatch_T": T,
        }
        if nonconvex:
            entry["pg_inequality_excess"] = max(r.pg_inequality_excess for r in recs)
            entry["mean_final_gap"] = float(np.mean([r.final_gap for r in recs]))
        per_N.append(entry)
        prev = mean
    fit = None
    Ns = np.array(cfg.N_grid, dtype=float)
    if len(Ns) >= 3 and Ns.max() / Ns.min() >= 10:
        rf = rate_fit(Ns, [e["mean"] for e in per_N])
        fit = {"slope": rf.slope, "slope_se": rf.slope_se, "intercept": rf.intercept, "clipped": rf.clipped}
    slope_ok = None
    if cfg.slope_range is not None and fit is not None:
        slope_ok = bool(cfg.slope_range[0] <= fit["slope"] <= cfg.slope_range[1])
    checkpoint_stats = None
    if cfg.trials >= 2:
        checkpoint_stats = {}
        for N in cfg.N_grid:
            st = aggregate(by_N[N], metric="gap")
            checkpoint_stats[str(N)] = {"k": st.index.tolist(), "mean": st.mean.tolist(), "se": st.se.tolist()}
    return {
        "problem": cfg.problem,
        "problem_params": cfg.problem_params,
        "plan": cfg.plan,
        "algorithm": cfg.algorithm,
        "trials": cfg.trials,
        "base_seed": cfg.seed,
        "N_grid": cfg.N_grid,
        "per_N": per_N,
        "checkpoint_curves": checkpoint_stats,
        "rate_fit": fit,
        "checks": {"dominance": dominance, "slope_in_range": slope_ok, "slope_range": cfg.slope_range},
    }


def run_experiment(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> tuple[str, str]:
    """Run every trial, write the CSV and JSON summary into ``out_dir``; return both paths."""
    rows, records = run_trials(cfg, jobs)
    summary = summarize_experiment(cfg, records)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, cfg.csv_name)
    json_path = os.path.join(out_dir, cfg.json_name)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return csv_path, json_path


def csv_without_wall_time(text: str) -> list:
    """CSV rows with the ``wall_ms`` column removed, for determinism comparisons."""
    rows = list(csv.reader(io.StringIO(text)))
    idx = rows[0].index("wall_ms")
    return [r[:idx] + r[idx + 1:] for r in rows]
