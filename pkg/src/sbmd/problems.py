"""Stochastic test problems with analytically known constants.

Every problem exposes the same oracle surface: draw a sample ``xi`` from a
seeded generator, return partial stochastic (sub)gradients ``G_i(x, xi)``,
and evaluate the exact objective for reporting. Constants (``M_i``, ``L_i``,
``sigma_i``, ``mu``) are declared so that stepsize plans can be built without
estimation.

Zoo:

* P1 ``make_p1_nonsmooth``   f(x) = E ||x - xi||_1, xi ~ U(c + [-delta, delta]^n)
* P2 ``make_p2_strongly``    P1 + (mu/2) ||x - c||^2
* P3 ``make_p3_composite``   0.5 x'Ax - b'x (+ mu/2 ||x||^2) + lam ||x||_1, noisy gradients
* P4 ``make_p4_nonconvex``   sum x_j^2 / (1 + x_j^2) + lam ||x||_1, noisy gradients
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .core import BlockStructure, ProxSetup, SeparableRegularizer, composite_prox_step
from .errors import DimensionError, ParameterError

NONSMOOTH = "nonsmooth-convex"
NONSMOOTH_STRONG = "nonsmooth-strongly-convex"
COMPOSITE = "smooth-composite-convex"
COMPOSITE_STRONG = "smooth-composite-strongly-convex"
NONCONVEX = "smooth-composite-nonconvex"

TAGS = (NONSMOOTH, NONSMOOTH_STRONG, COMPOSITE, COMPOSITE_STRONG, NONCONVEX)


class StochasticProblem:
    """Oracle contract shared by the zoo.

    Subclasses set the attributes below in ``__init__`` and implement
    ``sample_batch``, ``stoch_subgrad_block``, ``stoch_subgrad_block_batch``,
    ``grad`` and ``objective``.
    """

    name: str
    tag: str
    structure: BlockStructure
    setup: ProxSetup
    regularizer: Optional[SeparableRegularizer] = None
    M: Optional[tuple] = None
    L: Optional[tuple] = None
    sigma: Optional[tuple] = None
    mu: float = 0.0
    opt_value: Optional[float] = None
    x_star: Optional[np.ndarray] = None
    params: dict

    # -- sampling -------------------------------------------------------
    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One realization of ``xi``; consumes the stream exactly like a batch of one."""
        return self.sample_batch(rng, 1)[0]

    def sample_batch(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    # -- oracles --------------------------------------------------------
    def stoch_subgrad_block(self, x: np.ndarray, xi: np.ndarray, i: int) -> np.ndarray:
        raise NotImplementedError

    def stoch_subgrad_block_batch(self, x: np.ndarray, xis: np.ndarray, i: int) -> np.ndarray:
        raise NotImplementedError

    def stoch_grad_batch(self, x: np.ndarray, xis: np.ndarray) -> np.ndarray:
        """Full stochastic (sub)gradients, one row per sample."""
        return np.concatenate(
            [self.stoch_subgrad_block_batch(x, xis, i) for i in range(self.structure.b)], axis=1
        )

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_block(self, x: np.ndarray, i: int) -> np.ndarray:
        return self.grad(x)[self.structure.slice(i)]

    # -- evaluation -----------------------------------------------------
    def objective(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def composite_objective(self, x: np.ndarray) -> float:
        val = self.objective(x)
        if self.regularizer is not None:
            val += self.regularizer.value(self.structure, x)
        return val

    def gap(self, x: np.ndarray) -> float:
        return self.composite_objective(x) - self.opt_value

    @property
    def strongly_convex(self) -> bool:
        return self.tag in (NONSMOOTH_STRONG, COMPOSITE_STRONG)

    @property
    def smooth(self) -> bool:
        return self.tag in (COMPOSITE, COMPOSITE_STRONG, NONCONVEX)

    @property
    def L_bar(self) -> Optional[float]:
        return None if self.L is None else max(self.L)

    @property
    def sigma_sq(self) -> float:
        """``sigma^2 = sum_i sigma_i^2``."""
        return 0.0 if self.sigma is None else float(sum(s * s for s in self.sigma))

    def _check_block(self, i: int) -> None:
        if not 0 <= int(i) < self.structure.b:
            raise DimensionError(f"block index {i} out of range for b={self.structure.b}")

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} n={self.structure.n} b={self.structure.b}>"


def _box_setup(structure: BlockStructure, box) -> ProxSetup:
    if box is None:
        return ProxSetup.box(structure)
    lo, hi = box
    return ProxSetup.box(structure, float(lo), float(hi))


def _per_block(value, b: int, name: str) -> tuple:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (b,))
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be finite and nonnegative")
    return tuple(float(v) for v in arr)


class NonsmoothL1Problem(StochasticProblem):
    """``f(x) = E ||x - xi||_1 + (mu/2) ||x - c||^2`` with ``xi`` uniform on ``c + [-delta, delta]^n``.

    Subgradient of ``|t|`` at ``t = 0`` is taken as 0.
    """

    def __init__(self, n, b, delta, box=(-1.0, 1.0), center=None, mu=0.0):
        if delta < 0:
            raise ParameterError("delta must be nonnegative")
        if mu < 0:
            raise ParameterError("mu must be nonnegative")
        self.structure = BlockStructure.uniform(n, b)
        self.setup = _box_setup(self.structure, box)
        self.delta = float(delta)
        self.center = np.zeros(n) if center is None else np.broadcast_to(
            np.asarray(center, dtype=float), (n,)).copy()
        if not self.setup.contains(self.center):
            raise ParameterError("center must lie in the feasible box")
        self.mu = float(mu)
        self.tag = NONSMOOTH_STRONG if self.mu > 0 else NONSMOOTH
        self.name = "p2" if self.mu > 0 else "p1"

        # |s_j + mu (x_j - c_j)| <= 1 + mu * max_x |x_j - c_j| surely
        if self.mu > 0:
            if not self.setup.bounded:
                raise ParameterError("strongly convex P2 needs a bounded box for M_i")
            lo = np.concatenate([g.lower for g in self.setup.geometries])
            hi = np.concatenate([g.upper for g in self.setup.geometries])
            reach = np.maximum(hi - self.center, self.center - lo)
        else:
            reach = np.zeros(n)
        per_coord = (1.0 + self.mu * reach) ** 2
        self.M = tuple(
            float(math.sqrt(np.sum(per_coord[self.structure.slice(i)]))) for i in range(self.structure.b)
        )
        self.x_star = self.center.copy()
        self.opt_value = n * self.delta / 2.0
        self.params = {
            "n": n, "b": b, "delta": self.delta,
            "box": None if box is None else [float(box[0]), float(box[1])],
            "center": self.center.tolist(), "mu": self.mu,
        }

    def sample_batch(self, rng, size):
        n = self.structure.n
        return self.center + self.delta * rng.uniform(-1.0, 1.0, size=(size, n))

    def stoch_subgrad_block(self, x, xi, i):
        self._check_block(i)
        sl = self.structure.slice(i)
        g = np.sign(x[sl] - xi[sl])
        if self.mu:
            g = g + self.mu * (x[sl] - self.center[sl])
        return g

    def stoch_subgrad_block_batch(self, x, xis, i):
        self._check_block(i)
        sl = self.structure.slice(i)
        g = np.sign(x[sl] - xis[:, sl])
        if self.mu:
            g = g + self.mu * (x[sl] - self.center[sl])
        return g

    def grad(self, x):
        d = np.asarray(x, dtype=float) - self.center
        if self.delta > 0:
            g = np.clip(d / self.delta, -1.0, 1.0)
        else:
            g = np.sign(d)
        return g + self.mu * d

    def objective(self, x):
        t = np.abs(np.asarray(x, dtype=float) - self.center)
        if self.delta > 0:
            inside = t < self.delta
            per = np.where(inside, (t**2 + self.delta**2) / (2.0 * self.delta), t)
        else:
            per = t
        return float(np.sum(per) + 0.5 * self.mu * np.sum(t**2))


class _AdditiveNoiseMixin:
    """Gradient noise uniform on a per-block box with ``E||noise_i||^2 = sigma_i^2`` exactly."""

    def _init_noise(self, sigma):
        b = self.structure.b
        self.sigma = _per_block(sigma, b, "sigma")
        sizes = np.asarray(self.structure.sizes, dtype=float)
        half = np.asarray(self.sigma) * np.sqrt(3.0 / sizes)
        self._noise_halfwidth = np.repeat(half, self.structure.sizes)

    def sample_batch(self, rng, size):
        return self._noise_halfwidth * rng.uniform(-1.0, 1.0, size=(size, self.structure.n))

    def stoch_subgrad_block(self, x, xi, i):
        self._check_block(i)
        return self.grad_block(x, i) + xi[self.structure.slice(i)]

    def stoch_subgrad_block_batch(self, x, xis, i):
        self._check_block(i)
        return self.grad_block(x, i) + xis[:, self.structure.slice(i)]


class QuadraticCompositeProblem(_AdditiveNoiseMixin, StochasticProblem):
    """``phi(x) = 0.5 x'Ax - b'x + (mu/2)||x||^2 + lam ||x||_1`` with block-diagonal ``A``.

    ``A`` is given either as a length-``n`` diagonal or as one square PSD
    matrix per block. ``L_i = lambda_max(A_ii) + mu``.
    """

    def __init__(self, n, b, A, bvec, lam=0.0, sigma=0.0, mu=0.0, box=None):
        self.structure = BlockStructure.uniform(n, b)
        self.setup = _box_setup(self.structure, box)
        self.A_blocks = _block_matrices(A, self.structure)
        for blk in self.A_blocks:
            if np.linalg.eigvalsh(blk).min() < -1e-12:
                raise ParameterError("A blocks must be positive semidefinite")
        self.bvec = np.broadcast_to(np.asarray(bvec, dtype=float), (n,)).copy()
        if mu < 0 or lam < 0:
            raise ParameterError("mu and lam must be nonnegative")
        self.mu = float(mu)
        self.lam = float(lam)
        self.regularizer = SeparableRegularizer.l1(self.structure, self.lam)
        self.L = tuple(float(np.linalg.eigvalsh(blk).max()) + self.mu for blk in self.A_blocks)
        self._init_noise(sigma)
        self.tag = COMPOSITE_STRONG if self.mu > 0 else COMPOSITE
        self.name = "p3"
        self.x_star, self.opt_value = reference_solution(self)
        self.params = {
            "n": n, "b": b, "A": [blk.tolist() for blk in self.A_blocks], "bvec": self.bvec.tolist(),
            "lam": self.lam, "sigma": list(self.sigma), "mu": self.mu,
            "box": None if box is None else [float(box[0]), float(box[1])],
        }

    def grad_block(self, x, i):
        sl = self.structure.slice(i)
        xi = np.asarray(x[sl], dtype=float)
        return self.A_blocks[i] @ xi - self.bvec[sl] + self.mu * xi

    def grad(self, x):
        return np.concatenate([self.grad_block(x, i) for i in range(self.structure.b)])

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        quad = sum(
            float(x[self.structure.slice(i)] @ blk @ x[self.structure.slice(i)])
            for i, blk in enumerate(self.A_blocks)
        )
        return 0.5 * quad - float(self.bvec @ x) + 0.5 * self.mu * float(x @ x)


class NonconvexCompositeProblem(_AdditiveNoiseMixin, StochasticProblem):
    """``phi(x) = sum_j x_j^2 / (1 + x_j^2) + lam ||x||_1``; ``|f''| <= 2`` so ``L_i = 2``."""

    def __init__(self, n, b, lam=0.0, sigma=0.0, box=(-1.0, 1.0)):
        self.structure = BlockStructure.uniform(n, b)
        self.setup = _box_setup(self.structure, box)
        if not self.setup.contains(np.zeros(n)):
            raise ParameterError("the box must contain the origin (the global minimizer)")
        if lam < 0:
            raise ParameterError("lam must be nonnegative")
        self.lam = float(lam)
        self.regularizer = SeparableRegularizer.l1(self.structure, self.lam)
        self.L = (2.0,) * b
        self.mu = 0.0
        self._init_noise(sigma)
        self.tag = NONCONVEX
        self.name = "p4"
        self.x_star = np.zeros(n)
        self.opt_value = 0.0
        self.params = {
            "n": n, "b": b, "lam": self.lam, "sigma": list(self.sigma),
            "box": None if box is None else [float(box[0]), float(box[1])],
        }

    def grad_block(self, x, i):
        t = np.asarray(x[self.structure.slice(i)], dtype=float)
        return 2.0 * t / (1.0 + t * t) ** 2

    def grad(self, x):
        t = np.asarray(x, dtype=float)
        return 2.0 * t / (1.0 + t * t) ** 2

    def objective(self, x):
        t = np.asarray(x, dtype=float)
        return float(np.sum(t * t / (1.0 + t * t)))


def _block_matrices(A, structure: BlockStructure) -> list:
    if isinstance(A, (list, tuple)) and len(A) == structure.b and all(np.ndim(a) == 2 for a in A):
        blocks = [np.asarray(a, dtype=float) for a in A]
    else:
        diag = np.broadcast_to(np.asarray(A, dtype=float), (structure.n,))
        blocks = [np.diag(diag[structure.slice(i)]) for i in range(structure.b)]
    for i, blk in enumerate(blocks):
        s = structure.sizes[i]
        if blk.shape != (s, s):
            raise DimensionError(f"A block {i} must be {s}x{s}, got {blk.shape}")
        if not np.allclose(blk, blk.T):
            raise ParameterError(f"A block {i} must be symmetric")
    return blocks


def reference_solution(problem: StochasticProblem, tol: float = 1e-10, max_iter: int = 1_000_000):
    """Deterministic full-vector proximal gradient (FISTA with restarts) on ``phi``.

    Stops once the fixed-point residual ``||x - prox(x - g/L)||`` and the last
    objective decrease both fall below ``tol``. Returns ``(x_star, phi_star)``.
    """
    st = problem.structure
    setup = problem.setup
    weights = problem.regularizer.weights if problem.regularizer else (0.0,) * st.b
    step = 1.0 / max(problem.L)

    def prox_full(z, g):
        return np.concatenate(
            [composite_prox_step(setup, i, z[st.slice(i)], g[st.slice(i)], step, weights[i]) for i in range(st.b)]
        )

    x = setup.project(np.zeros(st.n))
    y = x.copy()
    t = 1.0
    phi = problem.composite_objective(x)
    for _ in range(max_iter):
        x_new = prox_full(y, problem.grad(y))
        phi_new = problem.composite_objective(x_new)
        if phi_new > phi:
            # adaptive restart: drop momentum and take a plain step from x
            y, t = x.copy(), 1.0
            x_new = prox_full(x, problem.grad(x))
            phi_new = problem.composite_objective(x_new)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        residual = np.linalg.norm(x_new - prox_full(x_new, problem.grad(x_new))) / step
        done = residual < tol and abs(phi - phi_new) < tol
        x, phi, t = x_new, phi_new, t_new
        if done:
            break
    return x, phi


def make_p1_nonsmooth(n, b, delta, box=(-1.0, 1.0), center=None) -> NonsmoothL1Problem:
    """P1: ``M_i = sqrt(n_i)``, ``f* = n delta / 2`` attained at ``x* = c``."""
    return NonsmoothL1Problem(n, b, delta, box=box, center=center, mu=0.0)


def make_p2_strongly(n, b, delta, mu, box=(-1.0, 1.0), center=None) -> NonsmoothL1Problem:
    """P2: P1 plus ``(mu/2)||x - c||^2``; same minimizer and optimal value."""
    if mu <= 0:
        return NonsmoothL1Problem(n, b, delta, box=box, center=center, mu=0.0)
    return NonsmoothL1Problem(n, b, delta, box=box, center=center, mu=mu)


def make_p3_composite(n, b, A, bvec, lam=0.0, sigma=0.0, mu=0.0, box=None) -> QuadraticCompositeProblem:
    return QuadraticCompositeProblem(n, b, A, bvec, lam=lam, sigma=sigma, mu=mu, box=box)


def make_p4_nonconvex(n, b, lam=0.0, sigma=0.0, box=(-1.0, 1.0)) -> NonconvexCompositeProblem:
    return NonconvexCompositeProblem(n, b, lam=lam, sigma=sigma, box=box)


ZOO = {
    "p1": (make_p1_nonsmooth, "nonsmooth l1 location problem with uniform noise"),
    "p2": (make_p2_strongly, "p1 plus a strongly convex quadratic"),
    "p3": (make_p3_composite, "noisy block-diagonal quadratic with l1 regularizer"),
    "p4": (make_p4_nonconvex, "nonconvex sum x^2/(1+x^2) with l1 regularizer"),
}


def make_problem(name: str, **params) -> StochasticProblem:
    try:
        factory = ZOO[name][0]
    except KeyError:
        raise ParameterError(f"unknown problem {name!r}; known: {sorted(ZOO)}") from None
    return factory(**params)
