"""Spin-S operators on the fully symmetric sector and log-safe helpers.

Basis index ``n`` counts the subsystem size and corresponds to
``S^z = N/2 - n``.  The y component is stored as ``iSy = i*S^y``, which is a
real antisymmetric matrix, so every Hermitized build stays real.

Axis convention shared by the whole package::

    x = sin(theta) cos(phi),  y = cos(theta),  z = sin(theta) sin(phi)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .banded import Banded

INF = math.inf


def is_inf(d) -> bool:
    return isinstance(d, float) and math.isinf(d)


def chi_of(d) -> float:
    """Imaginary rotation angle with ``tanh(chi) = 1/d`` (zero for ``d = inf``)."""
    if is_inf(d):
        return 0.0
    if d <= 1:
        raise ValueError(f"d must exceed 1, got {d}")
    return float(np.arctanh(1.0 / d))


@dataclass(frozen=True)
class SpinRep:
    N: int
    Sx: np.ndarray
    Sz: np.ndarray
    iSy: np.ndarray
    Sp: np.ndarray
    Sm: np.ndarray

    @property
    def dim(self) -> int:
        return self.N + 1

    @property
    def S(self) -> float:
        return self.N / 2


@dataclass
class ScaledVector:
    """Vector stored as ``coefficients * exp(logScale)`` with unit max-norm."""

    coefficients: np.ndarray
    logScale: float = 0.0

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        self.renormalize()

    def renormalize(self):
        m = float(np.max(np.abs(self.coefficients))) if self.coefficients.size else 0.0
        if m > 0 and np.isfinite(m):
            self.coefficients = self.coefficients / m
            self.logScale = float(self.logScale + math.log(m))
        return self

    @classmethod
    def from_log(cls, logabs, sign=None):
        logabs = np.asarray(logabs, dtype=float)
        top = float(np.max(logabs[np.isfinite(logabs)])) if np.any(np.isfinite(logabs)) else 0.0
        coef = np.exp(logabs - top)
        if sign is not None:
            coef = coef * sign
        return cls(coef, top)

    def log_abs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.coefficients)) + self.logScale

    def value(self) -> np.ndarray:
        return self.coefficients * math.exp(self.logScale)


@dataclass(frozen=True)
class NormalizationMap:
    N: int
    logEntries: np.ndarray


def build_spin_ops(N: int) -> SpinRep:
    """Dense spin-``N/2`` matrices in the ``S^z`` eigenbasis, largest ``S^z`` first."""
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    i = np.arange(N)
    sp = np.sqrt((i + 1.0) * (N - i))
    Sp = np.diag(sp, 1)
    Sm = Sp.T.copy()
    Sx = 0.5 * (Sp + Sm)
    iSy = 0.5 * (Sp - Sm)
    Sz = np.diag(N / 2 - np.arange(N + 1.0))
    return SpinRep(N, Sx, Sz, iSy, Sp, Sm)


def banded_spin_ops(N: int, mp=None):
    """Spin operators as :class:`Banded` objects; ``mp`` switches to mpmath entries."""
    if mp is None:
        sqrt, conv = np.sqrt, float
        sp = np.sqrt((np.arange(N) + 1.0) * (N - np.arange(N)))
        sz = N / 2 - np.arange(N + 1.0)
        one = np.ones(N + 1)
    else:
        sp = np.array([mp.sqrt(mp.mpf((k + 1) * (N - k))) for k in range(N)], dtype=object)
        sz = np.array([mp.mpf(N) / 2 - k for k in range(N + 1)], dtype=object)
        one = np.array([mp.mpf(1)] * (N + 1), dtype=object)
    half = 0.5 if mp is None else mp.mpf(1) / 2
    Sx = Banded(N + 1, {1: sp * half, -1: sp * half})
    iSy = Banded(N + 1, {1: sp * half, -1: -sp * half})
    Sz = Banded(N + 1, {0: sz})
    Id = Banded(N + 1, {0: one})
    return {"I": Id, "Sx": Sx, "iSy": iSy, "Sz": Sz}


def _log_binom(N, n):
    return gammaln(N + 1.0) - gammaln(n + 1.0) - gammaln(N - n + 1.0)


def normalization_map(N: int) -> NormalizationMap:
    """``logEntries[n] = 0.5 * log C(N, n)``, exact symmetry and zero at the ends."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    n = np.arange(N + 1)
    half = 0.5 * _log_binom(N, n)
    half = 0.5 * (half + half[::-1])
    half[0] = half[-1] = 0.0
    return NormalizationMap(int(N), half)


def coherent_state(rep: SpinRep, polar) -> np.ndarray:
    """Spin coherent state pointing along ``(x, y, z)`` of the package convention.

    The returned vector is real whenever ``y = 0`` (``theta = pi/2``) and complex
    otherwise.  Amplitudes are evaluated in the log domain.
    """
    theta, phi = polar
    x = math.sin(theta) * math.cos(phi)
    y = math.cos(theta)
    z = math.sin(theta) * math.sin(phi)
    # standard polar angle about z and azimuth in the x-y plane
    Theta = math.acos(max(-1.0, min(1.0, z)))
    Phi = math.atan2(y, x)
    N = rep.N
    n = np.arange(N + 1)
    c, s = math.cos(Theta / 2), math.sin(Theta / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        logc = math.log(c) if c > 0 else -np.inf
        logs = math.log(s) if s > 0 else -np.inf
        la = 0.5 * _log_binom(N, n) + np.where(N - n > 0, (N - n) * logc, 0.0) + np.where(n > 0, n * logs, 0.0)
    amp = np.exp(la - np.max(la))
    amp /= np.linalg.norm(amp)
    if abs(y) < 1e-15:
        sign = np.where((n % 2 == 1) & (x < 0), -1.0, 1.0)
        return amp * sign
    return amp * np.exp(1j * n * Phi)


@lru_cache(maxsize=32)
def _rotation_cached(N: int, chi: float):
    # exp(chi*Sx) for chi >= 0; Sx has nonnegative entries so the Taylor
    # series and the squarings involve no cancellation.
    A = build_spin_ops(N).Sx * chi
    norm = chi * N / 2
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    A = A / (2.0 ** s)
    term = np.eye(N + 1)
    E = np.eye(N + 1)
    for k in range(1, 30):
        term = term @ A / k
        E = E + term
        if np.max(np.abs(term)) < 1e-18 * np.max(np.abs(E)):
            break
    log_scale = 0.0
    for _ in range(s):
        E = E @ E
        m = float(np.max(np.abs(E)))
        E /= m
        log_scale = 2 * log_scale + math.log(m)
    E.setflags(write=False)
    return E, log_scale


def rotation_matrix(N: int, chi: float, sign: int = 1):
    """``exp(sign*chi*Sx)`` as ``(M, logScale)`` with ``max|M| = 1``.

    Built by scaling and squaring with renormalization after every squaring.
    The negative branch follows from ``R Sx R = -Sx`` with ``R = diag((-1)^n)``.
    """
    if not np.isfinite(chi):
        raise ValueError("chi must be finite")
    if chi < 0:
        chi, sign = -chi, -sign
    if chi == 0:
        return np.eye(N + 1), 0.0
    E, ls = _rotation_cached(int(N), float(chi))
    if sign < 0:
        r = (-1.0) ** np.arange(N + 1)
        E = r[:, None] * E * r[None, :]
    return E, ls


def apply_imaginary_rotation(rep_or_N, chi: float, v: ScaledVector, sign: int = 1) -> ScaledVector:
    """Return ``exp(sign*chi*Sx) v`` in scaled representation."""
    if not np.isfinite(chi):
        raise ValueError("chi must be finite")
    N = rep_or_N.N if isinstance(rep_or_N, SpinRep) else int(rep_or_N)
    if chi == 0:
        return ScaledVector(v.coefficients.copy(), v.logScale)
    M, ls = rotation_matrix(N, chi, sign)
    out = M @ v.coefficients
    return ScaledVector(out, v.logScale + ls)


def inversion_operator(N: int) -> np.ndarray:
    """Real part of ``exp(i*pi*Sx)`` up to the global phase ``i^N``: the flip ``n -> N-n``."""
    return np.eye(N + 1)[::-1].copy()
