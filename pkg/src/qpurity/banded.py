"""Minimal banded-matrix container.

Diagonals are stored as 1-D arrays keyed by offset ``k``; entry ``(i, i+k)``
lives at position ``min(i, i+k)``.  The dtype may be ``float64`` or ``object``
(holding ``mpmath.mpf`` values), which is what the high-precision paths use.
"""
from __future__ import annotations

import numpy as np


class Banded:
    def __init__(self, n: int, diags: dict | None = None):
        self.n = int(n)
        self.diags = {} if diags is None else dict(diags)

    @classmethod
    def identity(cls, n, one=1.0):
        dtype = object if not isinstance(one, float) else float
        return cls(n, {0: np.full(n, one, dtype=dtype)})

    @property
    def bandwidth(self):
        return max((abs(k) for k in self.diags), default=0)

    def copy(self):
        return Banded(self.n, {k: v.copy() for k, v in self.diags.items()})

    def __add__(self, other):
        out = self.copy()
        for k, v in other.diags.items():
            out.diags[k] = out.diags[k] + v if k in out.diags else v.copy()
        return out

    def __neg__(self):
        return Banded(self.n, {k: -v for k, v in self.diags.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        return Banded(self.n, {k: v * c for k, v in self.diags.items()})

    __rmul__ = __mul__

    def __matmul__(self, other):
        n = self.n
        out: dict = {}
        for k1, a in self.diags.items():
            for k2, b in other.diags.items():
                k = k1 + k2
                if abs(k) >= n:
                    continue
                # rows i with 0 <= i, i+k1, i+k < n
                lo = max(0, -k1, -k)
                hi = min(n, n - k1, n - k)
                if hi <= lo:
                    continue
                i = np.arange(lo, hi)
                ia = np.minimum(i, i + k1)
                j = i + k1
                ib = np.minimum(j, j + k2)
                prod = a[ia] * b[ib]
                pos = np.minimum(i, i + k)
                if k not in out:
                    out[k] = np.zeros(n - abs(k), dtype=prod.dtype)
                    if prod.dtype == object:
                        out[k][:] = prod.flat[0] * 0
                out[k][pos] = out[k][pos] + prod
        return Banded(n, out)

    def power(self, p: int):
        if p < 1:
            raise ValueError("power must be >= 1")
        result = self
        for _ in range(p - 1):
            result = result @ self
        return result

    def T(self):
        return Banded(self.n, {-k: v for k, v in self.diags.items()})

    def entry(self, i, j):
        k = j - i
        if k not in self.diags:
            return 0.0
        return self.diags[k][min(i, j)]

    def matvec(self, x):
        n = self.n
        y = None
        for k, v in self.diags.items():
            if k >= 0:
                term = v * x[k:]
                rows = slice(0, n - k)
            else:
                term = v * x[: n + k]
                rows = slice(-k, n)
            if y is None:
                y = np.zeros(n, dtype=term.dtype) if term.dtype != object else np.array([term.flat[0] * 0] * n, dtype=object)
            y[rows] = y[rows] + term
        return y

    def to_dense(self):
        dtype = object if any(v.dtype == object for v in self.diags.values()) else float
        m = np.zeros((self.n, self.n), dtype=dtype)
        for k, v in self.diags.items():
            idx = np.arange(self.n - abs(k))
            if k >= 0:
                m[idx, idx + k] = v
            else:
                m[idx - k, idx] = v
        return m

    def to_float(self):
        return Banded(self.n, {k: np.array([float(x) for x in v]) for k, v in self.diags.items()})
