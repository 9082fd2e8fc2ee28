"""Block-structured vectors and per-block Bregman geometry.

Each block ``i`` of ``x`` lives in a closed convex set ``X_i`` equipped with a
distance generating function ``omega_i`` of modulus one. Three geometries are
supported, each with an exact closed-form prox-mapping:

* ``EuclideanBox``    -- ``omega(x) = 0.5 ||x||_2^2`` on a (possibly unbounded) box
* ``EuclideanBall``   -- ``omega(x) = 0.5 ||x||_2^2`` on an l2 ball
* ``EntropySimplex``  -- ``omega(x) = sum x_j log x_j`` on the probability simplex,
  with the l1 norm (dual norm l_inf)

All objects here are immutable after construction and every function is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import xlogy

from .errors import DimensionError, DomainError, ParameterError, UnsupportedCombinationError

FEAS_TOL = 1e-10
# entropy iterates with exact zeros are lifted to this before taking logs
ENTROPY_FLOOR = 1e-300


@dataclass(frozen=True)
class BlockStructure:
    """Partition ``n = n_1 + ... + n_b`` of the coordinates into contiguous blocks."""

    sizes: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 1:
            raise DimensionError("a block structure needs at least one block")
        if any(s < 1 for s in sizes):
            raise DimensionError(f"block sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "offsets", tuple(int(o) for o in np.cumsum((0,) + sizes[:-1])))

    @classmethod
    def uniform(cls, n: int, b: int) -> "BlockStructure":
        """Split ``n`` coordinates into ``b`` blocks of (nearly) equal size."""
        if b < 1 or n < b:
            raise DimensionError(f"cannot split n={n} into b={b} nonempty blocks")
        base, extra = divmod(n, b)
        return cls(tuple(base + (1 if i < extra else 0) for i in range(b)))

    @property
    def b(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def slice(self, i: int) -> slice:
        self._check_index(i)
        return slice(self.offsets[i], self.offsets[i] + self.sizes[i])

    def block(self, x: np.ndarray, i: int) -> np.ndarray:
        return x[self.slice(i)]

    def block_of_coordinate(self) -> np.ndarray:
        """Integer array mapping each coordinate to its block index."""
        return np.repeat(np.arange(self.b), self.sizes)

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.b:
            raise DimensionError(f"block index {i} out of range for b={self.b}")


@dataclass(frozen=True, eq=False)
class BlockVector:
    structure: BlockStructure
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.structure.n,):
            raise DimensionError(f"expected {self.structure.n} coordinates, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("block vector has non-finite coordinates")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_blocks(cls, structure: BlockStructure, blocks: Sequence[Sequence[float]]) -> "BlockVector":
        if len(blocks) != structure.b:
            raise DimensionError(f"expected {structure.b} blocks, got {len(blocks)}")
        return cls(structure, np.concatenate([np.atleast_1d(np.asarray(v, dtype=float)) for v in blocks]))

    def block(self, i: int) -> np.ndarray:
        return self.values[self.structure.slice(i)]


def _as_block(x, dim: int, name: str = "point") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if arr.shape != (dim,):
        raise DimensionError(f"{name} must have shape ({dim},), got {arr.shape}")
    return arr


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not gamma > 0 or not math.isfinite(gamma):
        raise ParameterError(f"stepsize must be positive and finite, got {gamma}")
    return gamma


def soft_threshold(w: np.ndarray, t: float) -> np.ndarray:
    return np.sign(w) * np.maximum(np.abs(w) - t, 0.0)


class _Euclidean:
    """Shared pieces of the two euclidean geometries."""

    kind: str
    dim: int

    def omega(self, x) -> float:
        x = _as_block(x, self.dim)
        return 0.5 * float(x @ x)

    def grad_omega(self, x) -> np.ndarray:
        return _as_block(x, self.dim).copy()

    def norm(self, x) -> float:
        return float(np.linalg.norm(x))

    def dual_norm(self, y) -> float:
        return float(np.linalg.norm(y))

    def bregman(self, z, x) -> float:
        z = _as_block(z, self.dim, "z")
        x = _as_block(x, self.dim, "x")
        self._require(z, "z")
        self._require(x, "x")
        d = x - z
        return 0.5 * float(d @ d)

    def _require(self, x, name):
        if not self.contains(x):
            raise DomainError(f"{name} lies outside {self.kind}")


@dataclass(frozen=True, eq=False)
class EuclideanBox(_Euclidean):
    lower: np.ndarray
    upper: np.ndarray
    kind = "euclidean-box"

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("box bounds must be 1-D arrays of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ParameterError("box bounds must satisfy lower <= upper coordinatewise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, dim: int, lower: float = -np.inf, upper: float = np.inf) -> "EuclideanBox":
        return cls(np.full(dim, float(lower)), np.full(dim, float(upper)))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def project(self, w: np.ndarray) -> np.ndarray:
        return np.clip(w, self.lower, self.upper)

    def prox(self, v, y, gamma) -> np.ndarray:
        return np.clip(v - gamma * y, self.lower, self.upper)

    def composite_prox(self, v, y, gamma, weight) -> np.ndarray:
        # separable: each coordinate is a 1-D convex problem solved by clip(soft(.))
        return np.clip(soft_threshold(v - gamma * y, gamma * weight), self.lower, self.upper)

    def omega_range(self) -> Optional[float]:
        if not self.bounded:
            return None
        hi = 0.5 * float(np.sum(np.maximum(self.lower**2, self.upper**2)))
        nearest = np.clip(0.0, self.lower, self.upper)
        return hi - 0.5 * float(nearest @ nearest)

    def argmin_omega(self) -> np.ndarray:
        return np.clip(np.zeros(self.dim), self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class EuclideanBall(_Euclidean):
    center: np.ndarray
    radius: float
    kind = "euclidean-ball"

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=np.float64))
        if c.ndim != 1:
            raise DimensionError("ball center must be a 1-D array")
        if not self.radius > 0 or not math.isfinite(self.radius):
            raise ParameterError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    bounded = True

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        return bool(np.linalg.norm(np.asarray(x) - self.center) <= self.radius + tol)

    def project(self, w: np.ndarray) -> np.ndarray:
        d = w - self.center
        dist = np.linalg.norm(d)
        if dist <= self.radius:
            return w
        return self.center + d * (self.radius / dist)

    def prox(self, v, y, gamma) -> np.ndarray:
        return self.project(v - gamma * y)

    def composite_prox(self, v, y, gamma, weight) -> np.ndarray:
        # prox of l1 + indicator of an origin-centred l2 ball factorizes
        if np.any(self.center != 0.0):
            raise UnsupportedCombinationError("l1 regularizer requires a ball centred at the origin")
        return self.project(soft_threshold(v - gamma * y, gamma * weight))

    def omega_range(self) -> float:
        c = float(np.linalg.norm(self.center))
        return 0.5 * (c + self.radius) ** 2 - 0.5 * max(0.0, c - self.radius) ** 2

    def argmin_omega(self) -> np.ndarray:
        return self.project(np.zeros(self.dim))


@dataclass(frozen=True, eq=False)
class EntropySimplex:
    dim: int
    kind = "entropy-simplex"
    bounded = True

    def __post_init__(self):
        if int(self.dim) < 2:
            raise ParameterError("entropy simplex needs dimension >= 2")
        object.__setattr__(self, "dim", int(self.dim))

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= -tol) and abs(float(np.sum(x)) - 1.0) <= tol)

    def omega(self, x) -> float:
        x = _as_block(x, self.dim)
        return float(np.sum(xlogy(x, x)))

    def grad_omega(self, x) -> np.ndarray:
        x = _as_block(x, self.dim)
        if np.any(x <= 0):
            raise DomainError("entropy gradient undefined on the simplex boundary")
        return 1.0 + np.log(x)

    def norm(self, x) -> float:
        return float(np.sum(np.abs(x)))

    def dual_norm(self, y) -> float:
        return float(np.max(np.abs(y)))

    def bregman(self, z, x) -> float:
        z = _as_block(z, self.dim, "z")
        x = _as_block(x, self.dim, "x")
        if not self.contains(z) or not self.contains(x):
            raise DomainError("entropy Bregman distance needs points on the simplex")
        if np.any(z <= 0):
            raise DomainError("entropy Bregman distance needs z in the relative interior")
        x = np.maximum(x, 0.0)
        return float(np.sum(xlogy(x, x) - xlogy(x, z)) - np.sum(x) + np.sum(z))

    def project(self, w: np.ndarray) -> np.ndarray:
        raise UnsupportedCombinationError("entropy simplex has no euclidean projection here")

    def prox(self, v, y, gamma) -> np.ndarray:
        logits = np.log(np.maximum(v, ENTROPY_FLOOR)) - gamma * y
        u = np.exp(logits - np.max(logits))
        return u / np.sum(u)

    def composite_prox(self, v, y, gamma, weight) -> np.ndarray:
        raise UnsupportedCombinationError("l1 regularizer is not supported with entropy geometry")

    def omega_range(self) -> float:
        return math.log(self.dim)

    def argmin_omega(self) -> np.ndarray:
        return np.full(self.dim, 1.0 / self.dim)


Geometry = Union[EuclideanBox, EuclideanBall, EntropySimplex]


@dataclass(frozen=True, eq=False)
class ProxSetup:
    """Per-block geometry together with the derived constants ``D_i`` and ``Q``.

    ``D[i]`` is ``max omega_i - min omega_i`` over ``X_i`` (``None`` when the block
    is unbounded). ``Q`` is the quadratic growth constant: exactly 1 when every
    block is euclidean, ``None`` when an entropy block is present.
    """

    structure: BlockStructure
    geometries: tuple
    D: tuple = field(init=False)
    Q: Optional[float] = field(init=False)

    def __post_init__(self):
        geoms = tuple(self.geometries)
        if len(geoms) != self.structure.b:
            raise DimensionError(f"need {self.structure.b} geometries, got {len(geoms)}")
        for i, g in enumerate(geoms):
            if g.dim != self.structure.sizes[i]:
                raise DimensionError(f"geometry {i} has dim {g.dim}, block has {self.structure.sizes[i]}")
        object.__setattr__(self, "geometries", geoms)
        object.__setattr__(self, "D", tuple(omega_range(g) for g in geoms))
        euclid = all(isinstance(g, (EuclideanBox, EuclideanBall)) for g in geoms)
        object.__setattr__(self, "Q", 1.0 if euclid else None)

    @classmethod
    def box(cls, structure: BlockStructure, lower: float = -np.inf, upper: float = np.inf) -> "ProxSetup":
        return cls(structure, tuple(EuclideanBox.uniform(s, lower, upper) for s in structure.sizes))

    @classmethod
    def simplex(cls, structure: BlockStructure) -> "ProxSetup":
        return cls(structure, tuple(EntropySimplex(s) for s in structure.sizes))

    @property
    def bounded(self) -> bool:
        return all(d is not None for d in self.D)

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.structure.n,):
            return False
        return all(g.contains(x[self.structure.slice(i)], tol) for i, g in enumerate(self.geometries))

    def argmin_omega(self) -> np.ndarray:
        return np.concatenate([g.argmin_omega() for g in self.geometries])

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.concatenate(
            [g.project(x[self.structure.slice(i)]) for i, g in enumerate(self.geometries)]
        )


@dataclass(frozen=True)
class SeparableRegularizer:
    """``chi(x) = sum_i weights[i] * ||x^(i)||_1``; a zero weight is the zero term."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if any(not math.isfinite(v) or v < 0 for v in w):
            raise ParameterError(f"l1 weights must be finite and nonnegative, got {w}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def l1(cls, structure: BlockStructure, lam: float) -> "SeparableRegularizer":
        return cls((float(lam),) * structure.b)

    @classmethod
    def zero(cls, structure: BlockStructure) -> "SeparableRegularizer":
        return cls((0.0,) * structure.b)

    def value(self, structure: BlockStructure, x) -> float:
        if len(self.weights) != structure.b:
            raise DimensionError("regularizer block count does not match structure")
        x = np.asarray(x)
        return float(sum(w * np.sum(np.abs(x[structure.slice(i)])) for i, w in enumerate(self.weights) if w))


def _geometry(setup: ProxSetup, i: int):
    setup.structure._check_index(i)
    return setup.geometries[i]


def bregman(setup: ProxSetup, i: int, z, x) -> float:
    """Prox-function ``V_i(z, x) = omega_i(x) - omega_i(z) - <grad omega_i(z), x - z>``."""
    return _geometry(setup, i).bregman(z, x)


def prox_step(setup: ProxSetup, i: int, v, y, gamma: float) -> np.ndarray:
    """``argmin_{u in X_i} <y, u> + V_i(u, v) / gamma`` in closed form."""
    g = _geometry(setup, i)
    gamma = _check_gamma(gamma)
    v = _as_block(v, g.dim, "v")
    y = _as_block(y, g.dim, "y")
    if not np.all(np.isfinite(y)):
        raise DomainError("dual vector must be finite")
    return g.prox(v, y, gamma)


def composite_prox_step(setup: ProxSetup, i: int, v, y, gamma: float, weight: float = 0.0) -> np.ndarray:
    """Prox-mapping with the block term ``weight * ||.||_1`` added to the objective.

    A zero weight dispatches to :func:`prox_step`, so the two agree bitwise.
    """
    if weight == 0.0:
        return prox_step(setup, i, v, y, gamma)
    if weight < 0 or not math.isfinite(weight):
        raise ParameterError(f"l1 weight must be finite and nonnegative, got {weight}")
    g = _geometry(setup, i)
    gamma = _check_gamma(gamma)
    v = _as_block(v, g.dim, "v")
    y = _as_block(y, g.dim, "y")
    return g.composite_prox(v, y, gamma, float(weight))


def omega_range(geometry) -> Optional[float]:
    """``max omega - min omega`` over the set, or ``None`` if the set is unbounded.

    No square root is taken: downstream stepsizes and bounds use this quantity
    as an upper bound on ``V_i(x_1, x)``.
    """
    return geometry.omega_range()


def block_norms(x: BlockVector, setup: ProxSetup, dual: bool = False) -> tuple[np.ndarray, float]:
    """Per-block norms (primal or dual) and their root-sum-square aggregate."""
    if x.structure != setup.structure:
        raise DimensionError("vector structure does not match the prox setup")
    norms = np.array(
        [
            (g.dual_norm if dual else g.norm)(x.block(i))
            for i, g in enumerate(setup.geometries)
        ]
    )
    return norms, float(np.sqrt(np.sum(norms**2)))
