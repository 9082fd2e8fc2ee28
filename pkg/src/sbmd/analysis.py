"""Theoretical bound evaluators, trial statistics and empirical rate fits."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError

BOUND_KINDS = (
    "nonsmooth-a", "nonsmooth-b", "nonsmooth-b-optimalD", "strongly", "composite", "composite-strongly",
    "nonconvex-det", "nonconvex-stoch", "tail-nonsmooth", "tail-strongly",
)

# constants each bound reads; sigma is the aggregate sqrt(sum_i sigma_i^2)
_REQUIRED = {
    "nonsmooth-a": ("D", "M"),
    "nonsmooth-b": ("b", "M", "V", "D_tilde"),
    "nonsmooth-b-optimalD": ("b", "D", "M"),
    "strongly": ("b", "Q", "mu", "M"),
    "composite": ("b", "L_bar", "Delta", "V", "sigma", "D_tilde"),
    "composite-strongly": ("b", "Q", "mu", "k0", "Delta", "V", "sigma"),
    "nonconvex-det": ("b", "L_bar", "Delta"),
    "nonconvex-stoch": ("b", "L_bar", "Delta", "sigma", "T"),
    "tail-nonsmooth": ("b", "D", "M", "D_tilde", "lam"),
    "tail-strongly": ("b", "Q", "mu", "D", "M", "lam"),
}
# constants that appear as divisors and must be strictly positive
_POSITIVE = {"b", "Q", "mu", "L_bar", "D_tilde", "k0", "lam", "T"}

CLIP_FLOOR = 1e-16


@dataclass(frozen=True)
class BoundSpec:
    """Constants for one bound.

    ``Delta`` is the initial optimality gap ``phi(x_1) - phi*``; ``V`` is
    ``sum_i V_i(x_1, x*)``; ``D`` and ``M`` are per-block tuples.
    """

    kind: str
    b: Optional[int] = None
    D: Optional[tuple] = None
    M: Optional[tuple] = None
    D_tilde: Optional[float] = None
    Q: Optional[float] = None
    mu: Optional[float] = None
    L_bar: Optional[float] = None
    sigma: Optional[float] = None
    k0: Optional[int] = None
    Delta: Optional[float] = None
    V: Optional[float] = None
    lam: Optional[float] = None
    T: Optional[int] = None

    def __post_init__(self):
        if self.kind not in BOUND_KINDS:
            raise ParameterError(f"unknown bound kind {self.kind!r}; known: {BOUND_KINDS}")
        for name in ("D", "M"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(float(v) for v in val))
        for name in _REQUIRED[self.kind]:
            val = getattr(self, name)
            if val is None:
                raise ParameterError(f"bound {self.kind!r} needs constant {name!r}")
            if name in ("D", "M"):
                if any(not math.isfinite(v) or v < 0 for v in val):
                    raise ParameterError(f"{name} entries must be finite and nonnegative")
                if name == "M" and not any(v > 0 for v in val):
                    raise ParameterError("at least one M_i must be positive")
            elif name in _POSITIVE and not val > 0:
                raise ParameterError(f"{name} must be positive for bound {self.kind!r}, got {val}")
            elif not val >= 0:
                raise ParameterError(f"{name} must be nonnegative, got {val}")
        if self.kind in ("nonsmooth-b", "nonsmooth-b-optimalD", "tail-nonsmooth") and len(self.M) != self.b:
            raise ParameterError("M must have b entries")

    @property
    def M_bar(self) -> float:
        return max(self.M)

    @property
    def sum_M_sq(self) -> float:
        return float(sum(m * m for m in self.M))


def bound_value(spec: BoundSpec, N: int) -> float:
    """Right-hand side of the expected-gap (or stationarity) bound after ``N`` iterations."""
    if int(N) != N or N < 1:
        raise ParameterError(f"N must be a positive integer, got {N}")
    if spec.kind in ("composite", "composite-strongly") and N < 2:
        raise ParameterError("composite bounds hold for N >= 2")
    N = int(N)
    s = spec
    if s.kind == "nonsmooth-a":
        return math.sqrt(2.0 / N) * sum(math.sqrt(d) for d in s.D) * math.sqrt(s.sum_M_sq)
    if s.kind == "nonsmooth-b":
        return math.sqrt(s.sum_M_sq) * (s.V / s.D_tilde + s.D_tilde) * math.sqrt(s.b) / math.sqrt(2.0 * N)
    if s.kind == "nonsmooth-b-optimalD":
        return math.sqrt(2.0 * s.sum_M_sq) * math.sqrt(sum(s.D)) * math.sqrt(s.b / N)
    if s.kind == "strongly":
        return 2.0 * s.b * s.Q * s.sum_M_sq / (s.mu * (N + 1))
    if s.kind == "composite":
        return (
            (s.b - 1) * s.Delta / N
            + 2.0 * s.b * s.L_bar * s.V / N
            + s.sigma * math.sqrt(s.b) / math.sqrt(N) * (s.V / s.D_tilde + s.D_tilde)
        )
    if s.kind == "composite-strongly":
        return (
            s.mu * s.k0**2 * s.V / (s.Q * N * (N + 1))
            + 2.0 * (s.b - 1) * s.k0 * s.Delta / (N * (N + 1))
            + 4.0 * s.b * s.Q * s.sigma**2 / (s.mu * (N + 1))
        )
    if s.kind == "nonconvex-det":
        return 2.0 * s.b * s.L_bar * s.Delta / N
    if s.kind == "nonconvex-stoch":
        return 2.0 * s.b * s.L_bar * s.Delta / N + 4.0 * s.b * s.sigma**2 / s.T
    if s.kind == "tail-nonsmooth":
        return tail_threshold_nonsmooth(s.b, s.D, s.M, s.D_tilde, s.lam, N)
    return tail_threshold_strongly(s.b, s.Q, s.mu, s.D, s.M, s.lam, N)


def tail_bound(lam: float) -> float:
    """Probability bound ``exp(-lam^2/3) + exp(-lam)`` on exceeding a tail threshold."""
    if not lam > 0:
        raise ParameterError(f"tail parameter must be positive, got {lam}")
    return math.exp(-lam * lam / 3.0) + math.exp(-lam)


def tail_threshold_nonsmooth(b, D, M, D_tilde, lam, N) -> float:
    """Gap level exceeded with probability at most ``tail_bound(lam)`` under uniform blocks and constant steps."""
    sum_D = float(sum(D))
    sum_M_sq = float(sum(m * m for m in M))
    M_bar_sq = max(M) ** 2
    scale = b * math.sqrt(sum_M_sq) / math.sqrt(2.0 * N * b * D_tilde**2)
    return (
        scale * (2.0 * b * D_tilde**2 + sum_D + 2.0 * lam * b * D_tilde**2)
        + 32.0 * lam * b**2.5 * M_bar_sq * sum_D / math.sqrt(N * b * D_tilde**2)
    )


def tail_threshold_strongly(b, Q, mu, D, M, lam, N) -> float:
    """Gap level exceeded with probability at most ``tail_bound(lam)`` under the strongly convex plan."""
    M_bar_sq = max(M) ** 2
    return (
        4.0 * (1.0 + lam) * b * b * M_bar_sq * Q / ((N + 1) * mu)
        + 64.0 * lam * b * b * M_bar_sq * float(sum(D)) / math.sqrt(3.0 * N)
    )


@dataclass
class TrialStats:
    """Per-index summary across trials; ``index`` holds checkpoint iterations or N values."""

    index: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    quantiles: dict
    n_trials: np.ndarray
    exceedance: dict = field(default_factory=dict)
    exceedance_se: dict = field(default_factory=dict)


def _metric(record, metric: str, final: bool):
    if metric == "output_pg_norm_sq":
        return [record.output_pg_norm_sq]
    cps = record.checkpoints[-1:] if final else record.checkpoints
    return [getattr(c, metric) for c in cps]


def summarize(values: np.ndarray, axis: int = 0):
    """Mean and standard error ``std(ddof=1) / sqrt(n)`` along ``axis``."""
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    if n < 2:
        raise ParameterError("standard errors need at least two trials")
    return values.mean(axis=axis), values.std(axis=axis, ddof=1) / math.sqrt(n)


def aggregate(
    records: Sequence,
    metric: str = "gap",
    by: str = "checkpoint",
    quantiles: Sequence[float] = (0.1, 0.25, 0.5, 0.75, 0.9),
    thresholds: Sequence[float] = (),
) -> TrialStats:
    """Statistics of ``metric`` across trials.

    ``by="checkpoint"`` aligns the checkpoints of records sharing one horizon;
    ``by="N"`` groups records by horizon and uses each one's final value.
    ``thresholds`` adds empirical exceedance frequencies ``P(metric >= t)``.
    """
    if metric not in ("gap", "pg_norm_sq", "output_pg_norm_sq"):
        raise ParameterError(f"unknown metric {metric!r}")
    if len(records) < 2:
        raise ParameterError("aggregate needs at least two records")
    if by == "checkpoint":
        ks = [tuple(c.k for c in r.checkpoints) for r in records]
        if any(k != ks[0] for k in ks):
            raise ParameterError("records have misaligned checkpoints")
        index = np.asarray(ks[0] if metric != "output_pg_norm_sq" else (records[0].N,))
        table = np.array([_metric(r, metric, False) for r in records], dtype=float)
    elif by == "N":
        groups: dict = {}
        for r in records:
            groups.setdefault(r.N, []).append(_metric(r, metric, True)[0])
        index = np.array(sorted(groups))
        sizes = {len(v) for v in groups.values()}
        if len(sizes) != 1:
            raise ParameterError("every N needs the same number of trials")
        table = np.array([groups[n] for n in index], dtype=float).T
    else:
        raise ParameterError(f"unknown grouping {by!r}")
    if table.shape[0] < 2:
        raise ParameterError("standard errors need at least two trials per index")
    if not np.all(np.isfinite(table)):
        raise ParameterError(f"non-finite {metric} values")
    mean, se = summarize(table)
    qs = {float(q): np.quantile(table, q, axis=0) for q in quantiles}
    exc, exc_se = {}, {}
    n = table.shape[0]
    for t in thresholds:
        p = np.mean(table >= t, axis=0)
        exc[float(t)] = p
        exc_se[float(t)] = np.sqrt(p * (1.0 - p) / n)
    return TrialStats(index, mean, se, qs, np.full(index.shape, n), exc, exc_se)


@dataclass(frozen=True)
class RateFit:
    slope: float
    slope_se: float
    intercept: float
    clipped: bool


def rate_fit(stats_or_index, means: Optional[Sequence[float]] = None) -> RateFit:
    """Least-squares slope of ``log(mean)`` against ``log(index)``.

    Accepts a :class:`TrialStats` or explicit ``(index, means)`` arrays. Means
    below ``1e-16`` are clipped and flagged.
    """
    if isinstance(stats_or_index, TrialStats):
        x, y = stats_or_index.index, stats_or_index.mean
    else:
        x, y = stats_or_index, means
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.shape[0] < 3:
        raise ParameterError("rate fit needs at least three points")
    if np.any(x <= 0) or x.max() / x.min() < 10.0:
        raise ParameterError("rate fit needs positive indices spanning at least one decade")
    clipped = bool(np.any(y < CLIP_FLOOR))
    if clipped:
        warnings.warn("nonpositive or tiny means clipped at 1e-16 before the log fit", RuntimeWarning)
        y = np.maximum(y, CLIP_FLOOR)
    lx, ly = np.log(x), np.log(y)
    xc = lx - lx.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (ly - ly.mean())) / sxx
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    dof = x.shape[0] - 2
    se = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else 0.0
    return RateFit(slope, se, intercept, clipped)
