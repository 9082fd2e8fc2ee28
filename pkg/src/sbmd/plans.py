"""Stepsize, weight and block-probability plans for the three SBMD variants.

Indexing convention: ``gamma[k-1]`` is the stepsize of iteration ``k`` (``k = 1..N``)
and ``theta[k-1]`` is the averaging weight of iterate ``x_k`` (``k = 1..N+1``).
The plain algorithm averages ``x_1..x_N`` and ignores ``theta[N]``; the composite
variant sets ``theta[0] = 0`` and averages ``x_2..x_{N+1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError, PlanError

KINDS = ("nonsmooth-a", "nonsmooth-b", "strongly-convex", "composite", "composite-strongly", "nonconvex")
# plans driven by the plain (nonsmooth) algorithm
NONSMOOTH_KINDS = ("nonsmooth-a", "nonsmooth-b", "strongly-convex")
COMPOSITE_KINDS = ("composite", "composite-strongly")

_REL = 1e-12


@dataclass(frozen=True, eq=False)
class StepsizePlan:
    kind: str
    gamma: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    Gamma: Optional[np.ndarray] = None
    output_weights: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlanError(f"unknown plan kind {self.kind!r}")
        for name in ("gamma", "theta", "p", "Gamma", "output_weights"):
            val = getattr(self, name)
            if val is not None:
                arr = np.array(val, dtype=np.float64)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        self._validate()

    @property
    def N(self) -> int:
        return self.gamma.shape[0]

    @property
    def b(self) -> int:
        return self.p.shape[0]

    def _validate(self):
        g, p, m = self.gamma, self.p, self.meta
        if g.ndim != 1 or g.shape[0] < 1 or not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise PlanError("stepsizes must be a nonempty array of positive reals")
        if self.theta.shape != (g.shape[0] + 1,) or np.any(self.theta < 0):
            raise PlanError("theta must hold N+1 nonnegative weights")
        if np.any(p <= 0) or abs(float(np.sum(p)) - 1.0) > 1e-12:
            raise PlanError("block probabilities must be positive and sum to one")
        if self.kind in ("strongly-convex", "composite-strongly"):
            cap = self.b * m["Q"] / m["mu"]
            if np.any(g > cap * (1 + _REL)):
                raise PlanError(f"{self.kind}: stepsizes must satisfy gamma_k <= bQ/mu = {cap}")
        if self.kind in COMPOSITE_KINDS:
            cap = 1.0 / (2.0 * m["L_bar"])
            if np.any(g > cap * (1 + _REL)):
                raise PlanError(f"{self.kind}: stepsizes must satisfy gamma_k <= 1/(2 L_bar) = {cap}")
            if self.theta[0] != 0.0:
                raise PlanError("composite plans need theta_1 = 0")
        if self.kind == "nonconvex":
            L = np.asarray(m["L"], dtype=float)
            if np.any(g[:, None] * L[None, :] >= 2.0):
                raise PlanError("nonconvex: stepsizes must satisfy gamma_k < 2 / L_i for every block")
            w = self.output_weights
            if w is None or w.shape != g.shape or np.any(w < 0) or abs(float(np.sum(w)) - 1.0) > 1e-12:
                raise PlanError("nonconvex plans need an output distribution over 1..N")


def _positive(name, value):
    if not value > 0 or not math.isfinite(value):
        raise ParameterError(f"{name} must be positive and finite, got {value}")
    return float(value)


def _check_N(N):
    if int(N) != N or N < 1:
        raise ParameterError(f"N must be a positive integer, got {N}")
    return int(N)


def _uniform(b: int) -> np.ndarray:
    return np.full(b, 1.0 / b)


def plan_nonsmooth_a(D: Sequence[Optional[float]], M: Sequence[float], N: int) -> StepsizePlan:
    """Non-uniform block probabilities ``p_i ~ sqrt(D_i)`` for a bounded domain."""
    N = _check_N(N)
    if any(d is None or not math.isfinite(d) for d in D):
        raise PlanError("plan nonsmooth-a needs every D_i finite; use plan_nonsmooth_b")
    D = np.asarray(D, dtype=float)
    M = np.asarray(M, dtype=float)
    if D.shape != M.shape:
        raise ParameterError("D and M must have one entry per block")
    if np.any(D < 0) or np.all(D == 0):
        raise ParameterError("D_i must be nonnegative and not all zero")
    if np.any(M <= 0):
        raise ParameterError("M_i must be positive")
    root = np.sqrt(D)
    if np.any(root == 0):
        raise ParameterError("a zero D_i would give a zero block probability")
    p = root / root.sum()
    gamma = math.sqrt(2.0) * root.sum() / math.sqrt(N * float(np.sum(M**2)))
    steps = np.full(N, gamma)
    return StepsizePlan(
        "nonsmooth-a", steps, np.full(N + 1, gamma), p,
        meta={"D": D.tolist(), "M": M.tolist()},
    )


def plan_nonsmooth_b(D_tilde: float, M: Sequence[float], b: int, N: int) -> StepsizePlan:
    """Uniform probabilities; ``D_tilde = sqrt(sum D_i)`` is the recommended choice."""
    N = _check_N(N)
    D_tilde = _positive("D_tilde", D_tilde)
    M = np.asarray(M, dtype=float)
    if M.shape != (b,) or np.any(M <= 0):
        raise ParameterError("M must hold b positive entries")
    gamma = math.sqrt(2.0 * b) * D_tilde / math.sqrt(N * float(np.sum(M**2)))
    return StepsizePlan(
        "nonsmooth-b", np.full(N, gamma), np.full(N + 1, gamma), _uniform(b),
        meta={"D_tilde": D_tilde, "M": M.tolist()},
    )


def recommended_D_tilde(D: Sequence[Optional[float]]) -> float:
    if any(d is None for d in D):
        raise PlanError("recommended D_tilde needs every D_i finite")
    return math.sqrt(float(sum(D)))


def _gamma_recursion(gamma: np.ndarray, b: int, Q: float, mu: float) -> np.ndarray:
    G = np.empty_like(gamma)
    G[0] = 1.0
    for k in range(1, gamma.shape[0]):
        G[k] = G[k - 1] * (1.0 - gamma[k] * mu / (b * Q))
    return G


def plan_strongly(b: int, Q: float, mu: float, N: int) -> StepsizePlan:
    """``gamma_k = 2bQ / (mu (k+1))`` with ``theta_k = gamma_k / Gamma_k`` (closed form ``bkQ/mu``)."""
    N = _check_N(N)
    mu = _positive("mu", mu)
    if not Q >= 1:
        raise ParameterError(f"Q must be >= 1, got {Q}")
    k = np.arange(1, N + 2, dtype=float)
    gamma = 2.0 * b * Q / (mu * (k + 1.0))
    Gamma = _gamma_recursion(gamma, b, Q, mu)
    theta = gamma / Gamma
    return StepsizePlan(
        "strongly-convex", gamma[:N], theta, _uniform(b), Gamma=Gamma[:N],
        meta={"Q": float(Q), "mu": mu},
    )


def plan_composite(b: int, L_bar: float, sigma: float, D_tilde: float, N: int) -> StepsizePlan:
    """Constant ``gamma = min(1/(2 L_bar), (D_tilde/sigma) sqrt(b/N))``; ``theta = (0, gamma, ...)``."""
    N = _check_N(N)
    L_bar = _positive("L_bar", L_bar)
    D_tilde = _positive("D_tilde", D_tilde)
    if sigma < 0:
        raise ParameterError("sigma must be nonnegative")
    gamma = 1.0 / (2.0 * L_bar)
    if sigma > 0:
        gamma = min(gamma, D_tilde / sigma * math.sqrt(b / N))
    steps = np.full(N + 1, gamma)
    theta = np.empty(N + 1)
    theta[0] = 0.0
    theta[1:] = b * steps[:-1] - (b - 1) * steps[1:]
    return StepsizePlan(
        "composite", steps[:N], theta, _uniform(b),
        meta={"L_bar": L_bar, "sigma": float(sigma), "D_tilde": D_tilde},
    )


def plan_composite_strongly(b: int, Q: float, mu: float, L_bar: float, N: int) -> StepsizePlan:
    """``gamma_k = 2bQ / (mu (k + k0))`` with ``k0 = floor(4 b Q L_bar / mu)``."""
    N = _check_N(N)
    mu = _positive("mu", mu)
    L_bar = _positive("L_bar", L_bar)
    if not Q >= 1:
        raise ParameterError(f"Q must be >= 1, got {Q}")
    k0 = math.floor(4.0 * b * Q * L_bar / mu)
    if k0 < 1:
        raise ParameterError(f"k0 = floor(4bQL/mu) = {k0}; need 4bQL_bar/mu >= 1")
    k = np.arange(1, N + 2, dtype=float)
    gamma = 2.0 * b * Q / (mu * (k + k0))
    Gamma = _gamma_recursion(gamma, b, Q, mu)
    ratio = gamma / Gamma
    theta = np.empty(N + 1)
    theta[0] = 0.0
    theta[1:] = b * ratio[:-1] - (b - 1) * ratio[1:]
    if np.any(theta < 0):
        raise ParameterError(f"k0 = {k0} < b = {b} yields negative averaging weights")
    return StepsizePlan(
        "composite-strongly", gamma[:N], theta, _uniform(b), Gamma=Gamma[:N],
        meta={"Q": float(Q), "mu": mu, "L_bar": L_bar, "k0": k0},
    )


def plan_nonconvex(L: Sequence[float], p: Optional[Sequence[float]], N: int) -> StepsizePlan:
    """Constant ``gamma = 1/L_bar``; output index ``R`` has weights ``gamma_k min_i p_i (1 - L_i gamma_k / 2)``."""
    N = _check_N(N)
    L = np.asarray(L, dtype=float)
    if L.ndim != 1 or np.any(L <= 0) or not np.all(np.isfinite(L)):
        raise ParameterError("every L_i must be positive and finite")
    b = L.shape[0]
    p = _uniform(b) if p is None else np.asarray(p, dtype=float)
    if p.shape != (b,):
        raise ParameterError("p must hold one probability per block")
    gamma = np.full(N, 1.0 / L.max())
    raw = gamma * np.min(p[None, :] * (1.0 - 0.5 * L[None, :] * gamma[:, None]), axis=1)
    weights = raw / raw.sum()
    return StepsizePlan(
        "nonconvex", gamma, np.zeros(N + 1), p, output_weights=weights,
        meta={"L": L.tolist(), "L_bar": float(L.max()), "unnormalized_weights": raw.tolist()},
    )
