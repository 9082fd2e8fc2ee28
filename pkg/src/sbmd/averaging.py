"""Incremental weighted averaging of iterates that change one block at a time.

The running sum ``s`` only touches the block that is about to change: when block
``i`` is updated at iteration ``k`` its value has been constant since iteration
``u_i``, so it contributes ``x_k^(i) * (theta_{u_i} + ... + theta_k)``. Prefix sums
of ``theta`` make that an O(1) lookup.
"""

from __future__ import annotations

import numpy as np

from .core import BlockStructure
from .errors import DimensionError, StateError


class AveragingState:
    """Weighted average ``sum_k theta_k x_k / sum_k theta_k`` maintained block-wise.

    ``theta[k-1]`` is the weight of iterate ``k``.
    """

    def __init__(self, structure: BlockStructure, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.ndim != 1 or np.any(theta < 0):
            raise DimensionError("theta must be a 1-D array of nonnegative weights")
        self.structure = structure
        self.prefix = np.concatenate(([0.0], np.cumsum(theta)))
        self.s = np.zeros(structure.n)
        # u[i] is the first iteration whose weight block i has not yet been credited
        self.u = np.ones(structure.b, dtype=np.int64)
        self.last_k = 0
        self.finalized = False

    def _mass(self, i: int, k: int) -> float:
        return self.prefix[k] - self.prefix[self.u[i] - 1]

    def update(self, i: int, x_block: np.ndarray, k: int) -> None:
        """Credit block ``i`` with its value ``x_k^(i)`` just before it changes at iteration ``k``."""
        if self.finalized:
            raise StateError("averaging state already finalized")
        if k < self.last_k or k >= self.prefix.shape[0]:
            raise StateError(f"iteration index {k} out of order or beyond the weight horizon")
        sl = self.structure.slice(i)
        self.s[sl] += x_block * self._mass(i, k)
        self.u[i] = k + 1
        self.last_k = k

    def peek(self, x_current: np.ndarray, upto: int) -> np.ndarray:
        """Average of iterates ``1..upto`` without mutating the state.

        ``x_current`` must hold the current value of every block whose last
        credited index is below ``upto``.
        """
        total = self.prefix[upto]
        if total <= 0:
            raise StateError("averaging weights sum to zero")
        out = self.s.copy()
        for i in range(self.structure.b):
            sl = self.structure.slice(i)
            out[sl] += x_current[sl] * self._mass(i, upto)
        return out / total

    def finalize(self, x_last: np.ndarray, upto: int) -> np.ndarray:
        """Flush trailing weight through iteration ``upto`` and return the average."""
        if self.finalized:
            raise StateError("averaging state already finalized")
        out = self.peek(x_last, upto)
        self.finalized = True
        return out


def direct_average(trajectory, theta) -> np.ndarray:
    """Reference ``sum_k theta_k x_k / sum_k theta_k`` over a stored trajectory."""
    X = np.asarray(trajectory, dtype=float)
    w = np.asarray(theta, dtype=float)[: X.shape[0]]
    return (w @ X) / w.sum()
