"""Stochastic block mirror descent solvers and the full-vector baseline.

Randomness is split into three independent generators per seed so that the
block indices, the oracle samples and the output index never share a stream:

    SeedSequence([seed, 0]) -> block indices
    SeedSequence([seed, 1]) -> oracle samples
    SeedSequence([seed, 2]) -> output index R (nonconvex variant only)
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .averaging import AveragingState
from .core import FEAS_TOL, ProxSetup, composite_prox_step, prox_step
from .errors import DimensionError, DomainError, ParameterError, PlanError
from .plans import COMPOSITE_KINDS, NONSMOOTH_KINDS, StepsizePlan
from .problems import COMPOSITE, COMPOSITE_STRONG, NONCONVEX, StochasticProblem

BLOCK_STREAM, SAMPLE_STREAM, OUTPUT_STREAM = 0, 1, 2


def make_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Block, sample and output generators derived from one integer seed."""
    return tuple(
        np.random.default_rng(np.random.SeedSequence([int(seed), role]))
        for role in (BLOCK_STREAM, SAMPLE_STREAM, OUTPUT_STREAM)
    )


def geometric_checkpoints(N: int) -> list[int]:
    """``1, 2, 4, ...`` below ``N``, plus ``N`` itself."""
    ks, k = [], 1
    while k < N:
        ks.append(k)
        k *= 2
    ks.append(N)
    return ks


def draw_indices(u: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling of block indices from uniforms ``u``."""
    cdf = np.cumsum(p)
    return np.minimum(np.searchsorted(cdf, u, side="right"), p.shape[0] - 1)


@dataclass
class Checkpoint:
    k: int
    gap: float
    pg_norm_sq: Optional[float]
    samples_used: int
    wall_ms: float


@dataclass
class RunRecord:
    algorithm: str
    seed: int
    N: int
    checkpoints: list
    x_out: np.ndarray
    samples_used: int
    prox_calls: int
    wall_time: float
    output_index: Optional[int] = None
    output_pg_norm_sq: Optional[float] = None
    pg_inequality_excess: Optional[float] = None
    trajectory: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def final_gap(self) -> float:
        return self.checkpoints[-1].gap

    def same_result(self, other: "RunRecord") -> bool:
        """Bitwise equality of everything except wall-clock timings."""
        if (self.algorithm, self.seed, self.N, self.samples_used, self.prox_calls, self.output_index) != (
            other.algorithm, other.seed, other.N, other.samples_used, other.prox_calls, other.output_index
        ):
            return False
        if not np.array_equal(self.x_out, other.x_out):
            return False
        a = [(c.k, c.gap, c.pg_norm_sq, c.samples_used) for c in self.checkpoints]
        b = [(c.k, c.gap, c.pg_norm_sq, c.samples_used) for c in other.checkpoints]
        return a == b


def _prepare(problem: StochasticProblem, plan: StepsizePlan, x1, N, setup, kinds, checkpoints):
    setup = problem.setup if setup is None else setup
    if setup.structure != problem.structure:
        raise DimensionError("prox setup does not match the problem's block structure")
    if plan.kind not in kinds:
        raise PlanError(f"plan kind {plan.kind!r} not usable here; expected one of {kinds}")
    if plan.b != problem.structure.b:
        raise DimensionError(f"plan has {plan.b} block probabilities, problem has {problem.structure.b} blocks")
    N = plan.N if N is None else int(N)
    if N < 1 or N > plan.N:
        raise PlanError(f"N={N} outside the plan horizon 1..{plan.N}")
    x = np.array(x1, dtype=np.float64)
    if x.shape != (problem.structure.n,):
        raise DimensionError(f"x1 must have {problem.structure.n} coordinates")
    if not setup.contains(x):
        raise DomainError("starting point x1 is infeasible")
    cps = geometric_checkpoints(N) if checkpoints is None else sorted(set(int(k) for k in checkpoints))
    if cps[0] < 1 or cps[-1] > N:
        raise ParameterError("checkpoints must lie in 1..N")
    return setup, x, N, cps


def sbmd_run(
    problem: StochasticProblem,
    plan: StepsizePlan,
    x1,
    N: Optional[int] = None,
    seed: int = 0,
    *,
    setup: Optional[ProxSetup] = None,
    checkpoints: Optional[Sequence[int]] = None,
    store_trajectory: bool = False,
) -> RunRecord:
    """Stochastic block mirror descent for nonsmooth (optionally strongly) convex problems.

    Each iteration draws one block ``i ~ p`` and one sample, and updates only
    block ``i`` by a prox step along the partial stochastic subgradient. The
    output averages ``x_1..x_N`` with weights ``theta``.
    """
    setup, x, N, cps = _prepare(problem, plan, x1, N, setup, NONSMOOTH_KINDS, checkpoints)
    st = problem.structure
    block_rng, sample_rng, _ = make_streams(seed)
    blocks = draw_indices(block_rng.random(N), plan.p)
    avg = AveragingState(st, plan.theta)
    traj = [x.copy()] if store_trajectory else None
    records, next_cp = [], 0
    t0 = time.perf_counter()
    for k in range(1, N + 1):
        i = int(blocks[k - 1])
        sl = st.slice(i)
        xi = problem.sample(sample_rng)
        G = problem.stoch_subgrad_block(x, xi, i)
        avg.update(i, x[sl], k)
        x[sl] = prox_step(setup, i, x[sl], G, plan.gamma[k - 1])
        if traj is not None:
            traj.append(x.copy())
        if k == cps[next_cp]:
            gap = problem.gap(avg.peek(x, k))
            records.append(Checkpoint(k, gap, None, k, 1e3 * (time.perf_counter() - t0)))
            next_cp = min(next_cp + 1, len(cps) - 1)
    x_out = avg.finalize(x, N)
    return RunRecord(
        "sbmd", seed, N, records, x_out, samples_used=N, prox_calls=N,
        wall_time=time.perf_counter() - t0,
        trajectory=None if traj is None else np.array(traj),
    )


def sbmd_composite_run(
    problem: StochasticProblem,
    plan: StepsizePlan,
    x1,
    N: Optional[int] = None,
    seed: int = 0,
    *,
    setup: Optional[ProxSetup] = None,
    checkpoints: Optional[Sequence[int]] = None,
    store_trajectory: bool = False,
) -> RunRecord:
    """Block variant for smooth convex composite problems ``f + chi``.

    Uses the composite prox step and averages ``x_2..x_{N+1}`` (``theta_1 = 0``).
    """
    if problem.tag not in (COMPOSITE, COMPOSITE_STRONG):
        raise PlanError(f"composite solver needs a smooth convex composite problem, got {problem.tag}")
    setup, x, N, cps = _prepare(problem, plan, x1, N, setup, COMPOSITE_KINDS, checkpoints)
    st = problem.structure
    weights = problem.regularizer.weights
    block_rng, sample_rng, _ = make_streams(seed)
    blocks = draw_indices(block_rng.random(N), plan.p)
    avg = AveragingState(st, plan.theta)
    traj = [x.copy()] if store_trajectory else None
    records, next_cp = [], 0
    t0 = time.perf_counter()
    for k in range(1, N + 1):
        i = int(blocks[k - 1])
        sl = st.slice(i)
        xi = problem.sample(sample_rng)
        G = problem.stoch_subgrad_block(x, xi, i)
        avg.update(i, x[sl], k)
        x[sl] = composite_prox_step(setup, i, x[sl], G, plan.gamma[k - 1], weights[i])
        if traj is not None:
            traj.append(x.copy())
        if k == cps[next_cp]:
            gap = problem.gap(avg.peek(x, k + 1))
            records.append(Checkpoint(k, gap, None, k, 1e3 * (time.perf_counter() - t0)))
            next_cp = min(next_cp + 1, len(cps) - 1)
    x_out = avg.finalize(x, N + 1)
    return RunRecord(
        "sbmd-composite", seed, N, records, x_out, samples_used=N, prox_calls=N,
        wall_time=time.perf_counter() - t0,
        trajectory=None if traj is None else np.array(traj),
    )


def projected_gradient(setup: ProxSetup, regularizer, x, y, gamma: float) -> np.ndarray:
    """Composite projected gradient ``(x - P(x, y, gamma)) / gamma`` computed block by block."""
    if not gamma > 0:
        raise ParameterError(f"stepsize must be positive, got {gamma}")
    st = setup.structure
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (st.n,) or y.shape != (st.n,):
        raise DimensionError(f"x and y must have {st.n} coordinates")
    weights = regularizer.weights if regularizer is not None else (0.0,) * st.b
    out = np.empty(st.n)
    for i in range(st.b):
        sl = st.slice(i)
        out[sl] = (x[sl] - composite_prox_step(setup, i, x[sl], y[sl], gamma, weights[i])) / gamma
    return out


def minibatch_grad_block(problem: StochasticProblem, x, i: int, T: int, rng: np.random.Generator) -> np.ndarray:
    """Mean of ``T`` i.i.d. partial stochastic gradients of block ``i``."""
    if int(T) != T or T < 1:
        raise ParameterError(f"minibatch size must be a positive integer, got {T}")
    xis = problem.sample_batch(rng, int(T))
    return problem.stoch_subgrad_block_batch(x, xis, i).sum(axis=0) / T


def sbmd_nonconvex_run(
    problem: StochasticProblem,
    plan: StepsizePlan,
    x1,
    N: Optional[int] = None,
    T: int = 1,
    seed: int = 0,
    *,
    setup: Optional[ProxSetup] = None,
    checkpoints: Optional[Sequence[int]] = None,
    store_trajectory: bool = False,
) -> RunRecord:
    """Block variant for nonconvex composite problems with a randomized output ``x_R``.

    Each iteration uses a size-``T`` minibatch gradient of the chosen block.
    Checkpoints and the output report ``||PG(x_k, g(x_k), gamma_k)||^2`` with
    the exact gradient ``g``; the solver itself never sees ``g``. Every step also
    records how far ``||PG~_k - PG_k^(i)|| - ||G_i - g_i||`` rises above zero.
    """
    if problem.tag != NONCONVEX:
        raise PlanError(f"nonconvex solver needs a nonconvex composite problem, got {problem.tag}")
    setup, x, N, cps = _prepare(problem, plan, x1, N, setup, ("nonconvex",), checkpoints)
    if int(T) != T or T < 1:
        raise ParameterError(f"minibatch size must be a positive integer, got {T}")
    T = int(T)
    st = problem.structure
    reg = problem.regularizer
    weights = reg.weights
    block_rng, sample_rng, out_rng = make_streams(seed)
    blocks = draw_indices(block_rng.random(N), plan.p)
    w = plan.output_weights[:N]
    R = int(draw_indices(out_rng.random(1), w / w.sum())[0]) + 1
    traj = [x.copy()] if store_trajectory else None
    records, next_cp = [], 0
    x_R, pg_R = None, None
    pg_excess = -np.inf
    t0 = time.perf_counter()
    for k in range(1, N + 1):
        gamma = plan.gamma[k - 1]
        is_cp = k == cps[next_cp]
        if k == R or is_cp:
            pg_sq = float(np.sum(projected_gradient(setup, reg, x, problem.grad(x), gamma) ** 2))
            if k == R:
                x_R, pg_R = x.copy(), pg_sq
            if is_cp:
                gap = problem.gap(x)
                records.append(Checkpoint(k, gap, pg_sq, k * T, 1e3 * (time.perf_counter() - t0)))
                next_cp = min(next_cp + 1, len(cps) - 1)
        i = int(blocks[k - 1])
        sl = st.slice(i)
        G = minibatch_grad_block(problem, x, i, T, sample_rng)
        g = problem.grad_block(x, i)
        x_new = composite_prox_step(setup, i, x[sl], G, gamma, weights[i])
        pg_exact = (x[sl] - composite_prox_step(setup, i, x[sl], g, gamma, weights[i])) / gamma
        pg_tilde = (x[sl] - x_new) / gamma
        excess = np.linalg.norm(pg_tilde - pg_exact) - np.linalg.norm(G - g)
        pg_excess = max(pg_excess, float(excess))
        x[sl] = x_new
        if traj is not None:
            traj.append(x.copy())
    return RunRecord(
        "sbmd-nonconvex", seed, N, records, x_R, samples_used=N * T, prox_calls=N,
        wall_time=time.perf_counter() - t0, output_index=R, output_pg_norm_sq=pg_R,
        pg_inequality_excess=pg_excess,
        trajectory=None if traj is None else np.array(traj),
    )


def md_sa_run(
    problem: StochasticProblem,
    gamma,
    theta,
    x1,
    N: int,
    seed: int = 0,
    *,
    setup: Optional[ProxSetup] = None,
    checkpoints: Optional[Sequence[int]] = None,
    store_trajectory: bool = False,
) -> RunRecord:
    """Full-vector mirror descent SA: every block steps along the full stochastic subgradient.

    ``gamma`` and ``theta`` follow the plan indexing (``theta[k-1]`` weighs ``x_k``).
    The block stream is drawn exactly as in :func:`sbmd_run` so that a single-block
    run reproduces it bitwise.
    """
    setup = problem.setup if setup is None else setup
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (N,))
    theta = np.asarray(theta, dtype=float)
    if np.any(gamma <= 0):
        raise ParameterError("stepsizes must be positive")
    if theta.shape[0] < N:
        raise PlanError("theta must cover iterations 1..N")
    st = problem.structure
    x = np.array(x1, dtype=np.float64)
    if x.shape != (st.n,) or not setup.contains(x):
        raise DomainError("starting point x1 is infeasible")
    cps = geometric_checkpoints(N) if checkpoints is None else sorted(set(int(k) for k in checkpoints))
    block_rng, sample_rng, _ = make_streams(seed)
    block_rng.random(N)
    avg = AveragingState(st, theta)
    traj = [x.copy()] if store_trajectory else None
    records, next_cp = [], 0
    t0 = time.perf_counter()
    for k in range(1, N + 1):
        xi = problem.sample(sample_rng)
        Gs = [problem.stoch_subgrad_block(x, xi, i) for i in range(st.b)]
        for i in range(st.b):
            sl = st.slice(i)
            avg.update(i, x[sl], k)
            x[sl] = prox_step(setup, i, x[sl], Gs[i], gamma[k - 1])
        if traj is not None:
            traj.append(x.copy())
        if k == cps[next_cp]:
            gap = problem.gap(avg.peek(x, k))
            records.append(Checkpoint(k, gap, None, k, 1e3 * (time.perf_counter() - t0)))
            next_cp = min(next_cp + 1, len(cps) - 1)
    x_out = avg.finalize(x, N)
    return RunRecord(
        "md-sa", seed, N, records, x_out, samples_used=N, prox_calls=N * st.b,
        wall_time=time.perf_counter() - t0,
        trajectory=None if traj is None else np.array(traj),
    )


def feasible(setup: ProxSetup, x, tol: float = FEAS_TOL) -> bool:
    return setup.contains(x, tol)
