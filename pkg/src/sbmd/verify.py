"""Independent oracle checks: brute-force prox grids, averaging recomputation,
Monte Carlo unbiasedness, declared-constant validation and the per-step
projected-gradient inequality.

Every check returns a :class:`CheckResult`; ``run_checks`` runs the suite.
Prox checks accept a ``prox`` callable so a deliberately broken implementation
can be substituted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.special import xlogy

from .averaging import AveragingState, direct_average
from .core import (
    BlockStructure, EntropySimplex, EuclideanBall, EuclideanBox, ProxSetup, composite_prox_step,
)
from .errors import PlanError
from .plans import StepsizePlan, plan_nonconvex, plan_nonsmooth_b
from .problems import make_p1_nonsmooth, make_p2_strongly, make_p3_composite, make_p4_nonconvex
from .solvers import draw_indices, sbmd_nonconvex_run, sbmd_run

GRID_STEP = 1e-3
GRID_TOL = 1e-3
KKT_TOL = 1e-9
PG_INEQUALITY_TOL = 1e-12

ProxFn = Callable[[object, np.ndarray, np.ndarray, float, float], np.ndarray]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def library_prox(geom, v, y, gamma, weight=0.0) -> np.ndarray:
    """The package's closed-form (composite) prox on a single-block setup."""
    setup = ProxSetup(BlockStructure((geom.dim,)), (geom,))
    return composite_prox_step(setup, 0, v, y, gamma, weight)


# -- prox oracles -------------------------------------------------------------

def prox_objective(geom, v, y, gamma, weight, U) -> np.ndarray:
    """``<y, u> + V(u, v) / gamma + weight ||u||_1`` for each row ``u`` of ``U``."""
    U = np.atleast_2d(U)
    if isinstance(geom, EntropySimplex):
        vv = np.maximum(v, 1e-300)
        V = np.sum(xlogy(U, U) - xlogy(U, vv) - U + vv, axis=1)
    else:
        D = U - v
        V = 0.5 * np.sum(D * D, axis=1)
    return U @ y + V / gamma + weight * np.sum(np.abs(U), axis=1)


def grid_points(geom, h: float = GRID_STEP) -> np.ndarray:
    """Feasible grid with spacing ``h`` (euclidean sets of dim <= 2, simplices of dim <= 3)."""
    if isinstance(geom, EuclideanBox):
        axes = [np.append(np.arange(lo, hi, h), hi) for lo, hi in zip(geom.lower, geom.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    if isinstance(geom, EuclideanBall):
        r = geom.radius
        axes = [np.append(np.arange(-r, r, h), r)] * geom.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        P = np.stack([m.ravel() for m in mesh], axis=1)
        return P[np.einsum("ij,ij->i", P, P) <= r * r] + geom.center
    return _simplex_grid(geom.dim, h)[0]


@lru_cache(maxsize=4)
def _simplex_grid(dim: int, h: float):
    """Simplex grid and its row sums of ``u log u`` (reused across cases)."""
    K = int(round(1.0 / h))
    if dim == 2:
        t = np.arange(K + 1) / K
        P = np.stack([t, 1.0 - t], axis=1)
    elif dim == 3:
        i, j = np.meshgrid(np.arange(K + 1), np.arange(K + 1), indexing="ij")
        keep = i + j <= K
        i, j = i[keep], j[keep]
        P = np.stack([i / K, j / K, (K - i - j) / K], axis=1)
    else:
        raise ValueError("grid oracle supports simplices of dimension 2 or 3")
    ulogu = xlogy(P, P).sum(axis=1)
    P.flags.writeable = False
    ulogu.flags.writeable = False
    return P, ulogu


def grid_minimum(geom, v, y, gamma, weight, h: float = GRID_STEP) -> float:
    """Smallest prox objective over the feasible grid."""
    if isinstance(geom, EntropySimplex):
        P, ulogu = _simplex_grid(geom.dim, h)
        vv = np.maximum(v, 1e-300)
        # prox_objective with u log u precomputed; ||u||_1 = 1 on the simplex
        V = ulogu - P @ np.log(vv) - P.sum(axis=1) + vv.sum()
        return float(np.min(P @ y + V / gamma)) + weight
    return float(prox_objective(geom, v, y, gamma, weight, grid_points(geom, h)).min())


def kkt_residual(geom, v, y, gamma, weight, u) -> Optional[float]:
    """First-order optimality residual of ``u`` for the prox problem, or ``None`` where nonsmooth."""
    if isinstance(geom, EntropySimplex):
        if np.min(u) < 1e-200:
            return None
        r = y + (np.log(u) - np.log(np.maximum(v, 1e-300))) / gamma
        return float(0.5 * (r.max() - r.min()))
    grad = y + (u - v) / gamma
    if isinstance(geom, EuclideanBox):
        # -grad must lie in N_box(u) + weight * d|u| coordinatewise, an interval [a, b]
        tol = 1e-12
        at_lo = u <= geom.lower + tol
        at_hi = u >= geom.upper - tol
        zero = np.abs(u) <= tol
        s = np.sign(u)
        a = np.where(zero, -weight, weight * s)
        b = np.where(zero, weight, weight * s)
        a = np.where(at_lo, -np.inf, a)
        b = np.where(at_hi, np.inf, b)
        g = -grad
        dist = np.maximum(a - g, 0.0) + np.maximum(g - b, 0.0)
        return float(np.max(dist))
    if weight != 0.0:
        return None
    d = u - geom.center
    if np.linalg.norm(d) < geom.radius - 1e-12:
        return float(np.linalg.norm(grad))
    n = d / np.linalg.norm(d)
    g = -grad
    along = float(g @ n)
    return float(np.linalg.norm(g - max(along, 0.0) * n))


def random_prox_case(kind: str, rng: np.random.Generator):
    """``(geometry, v, y, gamma, weight)`` for one random prox instance of ``kind``."""
    gamma = float(np.exp(rng.uniform(math.log(0.05), math.log(5.0))))
    if kind == "euclidean-box":
        dim = int(rng.integers(1, 3))
        lo = rng.uniform(-1.0, 0.5, dim)
        hi = lo + rng.uniform(0.1, 0.6, dim)
        geom = EuclideanBox(lo, hi)
        v = rng.uniform(lo, hi)
        weight = float(rng.uniform(0.0, 1.0)) if rng.random() < 0.5 else 0.0
    elif kind == "euclidean-ball":
        dim = 2
        radius = float(rng.uniform(0.1, 0.4))
        weight = float(rng.uniform(0.0, 1.0)) if rng.random() < 0.5 else 0.0
        center = np.zeros(dim) if weight else rng.uniform(-1.0, 1.0, dim)
        geom = EuclideanBall(center, radius)
        d = rng.normal(size=dim)
        v = center + d / np.linalg.norm(d) * radius * rng.uniform() ** 0.5
    elif kind == "entropy-simplex":
        dim = int(rng.integers(2, 4))
        geom = EntropySimplex(dim)
        v = rng.dirichlet(np.ones(dim))
        weight = 0.0
    else:
        raise ValueError(f"unknown geometry kind {kind!r}")
    y = rng.uniform(-3.0, 3.0, geom.dim)
    return geom, v, y, gamma, weight


def prox_oracle_check(kind: str, cases: int, seed: int = 0, prox: Optional[ProxFn] = None) -> CheckResult:
    """Closed-form prox against a 1e-3 grid (objective excess) and its KKT residual."""
    prox = library_prox if prox is None else prox
    rng = np.random.default_rng(seed)
    worst_excess, worst_kkt, kkt_count, infeasible = -np.inf, 0.0, 0, 0
    for _ in range(cases):
        geom, v, y, gamma, weight = random_prox_case(kind, rng)
        u = np.asarray(prox(geom, v, y, gamma, weight), dtype=float)
        if not geom.contains(u, 1e-12):
            infeasible += 1
            continue
        excess = prox_objective(geom, v, y, gamma, weight, u)[0] - grid_minimum(geom, v, y, gamma, weight)
        worst_excess = max(worst_excess, float(excess))
        r = kkt_residual(geom, v, y, gamma, weight, u)
        if r is not None:
            kkt_count += 1
            worst_kkt = max(worst_kkt, r)
    passed = infeasible == 0 and worst_excess <= GRID_TOL and worst_kkt <= KKT_TOL
    detail = (
        f"{cases} cases, max excess over grid {worst_excess:.3e} (tol {GRID_TOL:g}), "
        f"max KKT residual {worst_kkt:.3e} on {kkt_count} smooth cases (tol {KKT_TOL:g}), infeasible {infeasible}"
    )
    return CheckResult(f"prox-{kind}", passed, detail)


# -- averaging ------------------------------------------------------------------

def averaging_check(cases: int = 200, seed: int = 0) -> CheckResult:
    """Incremental block averaging against the direct weighted average of a stored trajectory."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        b = int(rng.integers(1, 6))
        sizes = tuple(int(s) for s in rng.integers(1, 4, b))
        st = BlockStructure(sizes)
        N = int(rng.integers(1, 51))
        theta = rng.uniform(0.0, 2.0, N + 1)
        theta[rng.random(N + 1) < 0.2] = 0.0
        theta[N - 1] += 0.1
        upto = N if rng.random() < 0.5 else N + 1
        x = rng.normal(size=st.n)
        traj = [x.copy()]
        avg = AveragingState(st, theta)
        for k in range(1, N + 1):
            i = int(rng.integers(b))
            sl = st.slice(i)
            avg.update(i, x[sl], k)
            x[sl] = rng.normal(size=sizes[i])
            traj.append(x.copy())
        inc = avg.finalize(x, upto)
        ref = direct_average(np.array(traj[:upto]), theta[:upto])
        err = np.max(np.abs(inc - ref)) / max(1.0, np.max(np.abs(ref)))
        worst = max(worst, float(err))
    return CheckResult("averaging", worst <= 1e-12, f"{cases} trajectories, max relative error {worst:.3e}")


# -- problems -------------------------------------------------------------------

def zoo_instances() -> dict:
    """Small instances of every zoo problem used by the oracle checks."""
    A = np.linspace(1.0, 4.0, 8)
    return {
        "p1": make_p1_nonsmooth(8, 2, 0.5, center=0.25),
        "p2": make_p2_strongly(8, 2, 0.5, 1.0, center=0.25),
        "p3": make_p3_composite(8, 2, A, 1.0, lam=0.3, sigma=1.0),
        "p4": make_p4_nonconvex(8, 2, lam=0.1, sigma=0.5),
    }


def random_feasible(problem, rng) -> np.ndarray:
    lo, hi = [], []
    for g in problem.setup.geometries:
        lo.append(np.maximum(g.lower, -2.0))
        hi.append(np.minimum(g.upper, 2.0))
    return rng.uniform(np.concatenate(lo), np.concatenate(hi))


def block_estimator_zscores(problem, x, draws: int, rng, p=None) -> np.ndarray:
    """Per-coordinate ``|mean - g| / SE`` of ``p_i^{-1} U_i G_i`` with ``i ~ p``."""
    st = problem.structure
    p = np.full(st.b, 1.0 / st.b) if p is None else np.asarray(p)
    blocks = draw_indices(rng.random(draws), p)
    xis = problem.sample_batch(rng, draws)
    G = problem.stoch_grad_batch(x, xis)
    owner = st.block_of_coordinate()
    mask = owner[None, :] == blocks[:, None]
    est = np.where(mask, G / p[owner][None, :], 0.0)
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / math.sqrt(draws)
    g = problem.grad(x)
    diff = np.abs(mean - g)
    return np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 1e-12, np.inf, 0.0))


def unbiasedness_check(draws: int = 20_000, points: int = 5, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = {}
    for name, prob in zoo_instances().items():
        z = max(float(block_estimator_zscores(prob, random_feasible(prob, rng), draws, rng).max()) for _ in range(points))
        worst[name] = z
    passed = all(z <= 4.0 for z in worst.values())
    return CheckResult("unbiasedness", passed, ", ".join(f"{k} max z {v:.2f}" for k, v in worst.items()))


def constants_check(pairs: int = 10_000, seed: int = 0) -> CheckResult:
    """Declared M_i, L_i and sigma_i against sampled points; gradients against finite differences."""
    rng = np.random.default_rng(seed)
    zoo = zoo_instances()
    msgs, ok = [], True
    for name in ("p1", "p2"):
        prob = zoo[name]
        worst = 0.0
        for _ in range(pairs):
            x = random_feasible(prob, rng)
            xi = prob.sample(rng)
            for i in range(prob.structure.b):
                G = prob.stoch_subgrad_block(x, xi, i)
                worst = max(worst, float(G @ G) - prob.M[i] ** 2)
        ok &= worst <= 1e-12
        msgs.append(f"{name} max(|G_i|^2 - M_i^2) {worst:.2e}")
    for name in ("p3", "p4"):
        prob = zoo[name]
        worst_L, worst_fd, worst_var = 0.0, 0.0, 0.0
        for _ in range(pairs // 10):
            x = random_feasible(prob, rng)
            i = int(rng.integers(prob.structure.b))
            sl = prob.structure.slice(i)
            rho = rng.normal(size=prob.structure.sizes[i]) * rng.uniform(1e-3, 1.0)
            x2 = x.copy()
            x2[sl] += rho
            lhs = np.linalg.norm(prob.grad_block(x2, i) - prob.grad_block(x, i))
            worst_L = max(worst_L, float(lhs - prob.L[i] * np.linalg.norm(rho)))
        for _ in range(20):
            x = random_feasible(prob, rng)
            g = prob.grad(x)
            h = 1e-5
            fd = np.array([
                (prob.objective(x + h * e) - prob.objective(x - h * e)) / (2 * h) for e in np.eye(prob.structure.n)
            ])
            worst_fd = max(worst_fd, float(np.max(np.abs(fd - g)) / max(1.0, np.max(np.abs(g)))))
        xis = prob.sample_batch(rng, 100_000)
        for i in range(prob.structure.b):
            sl = prob.structure.slice(i)
            var = float(np.mean(np.sum(xis[:, sl] ** 2, axis=1)))
            worst_var = max(worst_var, var / prob.sigma[i] ** 2 - 1.0)
        ok &= worst_L <= 1e-12 and worst_fd <= 1e-6 and worst_var <= 0.05
        msgs.append(f"{name} L excess {worst_L:.2e}, FD rel err {worst_fd:.2e}, noise var excess {worst_var:+.3f}")
    return CheckResult("constants", bool(ok), "; ".join(msgs))


def pg_inequality_check(seed: int = 0) -> CheckResult:
    prob = make_p4_nonconvex(16, 4, lam=0.1, sigma=0.5)
    plan = plan_nonconvex(prob.L, None, 200)
    worst = -np.inf
    for s in range(5):
        rec = sbmd_nonconvex_run(prob, plan, np.full(16, 0.8), 200, 4, seed + s)
        worst = max(worst, rec.pg_inequality_excess)
    return CheckResult("pg-inequality", worst <= PG_INEQUALITY_TOL, f"max excess {worst:.2e} over 5 runs of 200 steps")


def plan_constraint_check() -> CheckResult:
    bad = [
        dict(kind="strongly-convex", gamma=[3.0], theta=[1.0, 1.0], p=[1.0], meta={"Q": 1.0, "mu": 1.0}),
        dict(kind="composite", gamma=[1.0], theta=[0.0, 1.0], p=[1.0], meta={"L_bar": 1.0}),
        dict(kind="nonconvex", gamma=[2.0], theta=[0.0, 0.0], p=[1.0], output_weights=[1.0], meta={"L": [1.0]}),
        dict(kind="nonsmooth-b", gamma=[1.0], theta=[1.0, 1.0], p=[0.7, 0.7]),
    ]
    rejected = 0
    for kw in bad:
        try:
            StepsizePlan(**kw)
        except PlanError:
            rejected += 1
    return CheckResult("plan-constraints", rejected == len(bad), f"rejected {rejected}/{len(bad)} infeasible plans")


def determinism_check(seed: int = 7) -> CheckResult:
    prob = make_p1_nonsmooth(8, 2, 0.5, center=0.25)
    plan = plan_nonsmooth_b(math.sqrt(sum(prob.setup.D)), prob.M, 2, 64)
    a = sbmd_run(prob, plan, np.zeros(8), 64, seed)
    b = sbmd_run(prob, plan, np.zeros(8), 64, seed)
    return CheckResult("determinism", a.same_result(b), "two runs with one seed compared bitwise")


def run_checks(prox: Optional[ProxFn] = None, prox_cases: int = 100, mc_draws: int = 20_000) -> list:
    """Full verification suite; ``prox`` replaces the closed-form prox in the prox checks."""
    results = [
        prox_oracle_check(kind, prox_cases, seed=k, prox=prox)
        for k, kind in enumerate(("euclidean-box", "euclidean-ball", "entropy-simplex"))
    ]
    results += [
        averaging_check(),
        unbiasedness_check(draws=mc_draws),
        constants_check(),
        pg_inequality_check(),
        plan_constraint_check(),
        determinism_check(),
    ]
    return results
