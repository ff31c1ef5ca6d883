"""Classical large-N rotor limit, phase classification and closed-form curves.

Spin operators are replaced by ``N*(x, y, z)/2`` on the unit sphere.  Values
are reported per qudit (``L/N``) and measured relative to the formal origin
``x = y = z = 0``; this removes the N-independent constant that every preset
carries and leaves the landscape shape untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar
from scipy.special import gammaln

from .lindblad import Kind, Preset, TermSpec, brackets, couplings, measure, unitary, unitary_inter
from .spin import INF, is_inf

PHI_TOL = 1e-4
CRIT_TOL = 1e-6


class Phase(str, Enum):
    SCRAMBLED = "Scrambled"
    PURIFIED = "Purified"
    CRITICAL = "Critical"


@dataclass(frozen=True)
class RotorPoint:
    theta: float
    phi: float
    value: float = float("nan")

    @property
    def xyz(self):
        st = math.sin(self.theta)
        y = 0.0 if self.theta == math.pi / 2 else math.cos(self.theta)
        return (st * math.cos(self.phi), y, st * math.sin(self.phi))

    @classmethod
    def equator(cls, phi, value=float("nan")):
        return cls(math.pi / 2, phi, value)


@dataclass
class PhaseReport:
    phase: Phase
    minima: list
    phi0: float | None
    degeneracy: int
    hessianEigenvalues: list
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class OscillatorCoeffs:
    kinetic: float
    potential: float


# ------------------------------------------------------------ evaluation

def _xyz(point):
    if isinstance(point, RotorPoint):
        return point.xyz
    return tuple(np.asarray(c, dtype=float) for c in point)


def _term_value(term: TermSpec, pts, d, N):
    g, _ = couplings(term, N, d)
    out = 0.0
    for coef, (c0, cx, ciy, cz) in brackets(term, d, hermitized=True):
        prod = 1.0
        prod0 = 1.0
        targets = pts if term.inter else (pts[term.cluster],)
        for (x, y, z) in targets:
            b = c0 + 0.5 * (cx * x + 1j * ciy * y + cz * z)
            prod = prod * b ** term.q
            prod0 = prod0 * c0 ** term.q
        out = out + coef * (prod - prod0)
    return g * np.real(out)


def classical_value(terms, point, d, N=None):
    """Rotor value ``L/N`` of ``terms`` at ``point``.

    Parameters
    ----------
    terms : sequence of TermSpec
    point : RotorPoint, (x, y, z) arrays, or a pair of those for two clusters
    d : float
        Qudit dimension, ``math.inf`` allowed.
    N : int, optional
        Only needed by presets whose rotor coupling depends on N.

    Returns
    -------
    float or ndarray
    """
    terms = list(terms)
    two = isinstance(point, (list, tuple)) and len(point) == 2 and not np.isscalar(point[0])
    pts = [_xyz(p) for p in point] if two else [_xyz(point)]
    for t in terms:
        if (t.inter or t.cluster == 1) and not two:
            raise ValueError(f"{t.kind.value} needs a pair of rotor points")
    total = 0.0
    for t in terms:
        total = total + _term_value(t, pts, d, N)
    return total


def equator_value(terms, phi, d, N=None):
    phi = np.asarray(phi, dtype=float)
    return classical_value(terms, (np.cos(phi), np.zeros_like(phi), np.sin(phi)), d, N)


def second_derivative(f, x0=0.0, h=1e-3):
    """Richardson-extrapolated central second difference."""
    def c(hh):
        return (f(x0 + hh) - 2 * f(x0) + f(x0 - hh)) / hh ** 2
    return (4 * c(h / 2) - c(h)) / 3


# ------------------------------------------------------------ minimization

def _polish(terms, d, N, theta, phi):
    res = minimize(lambda p: float(classical_value(terms, RotorPoint(p[0], p[1]), d, N)),
                   [theta, phi], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000})
    th, ph = res.x
    th = float(np.clip(th, 0.0, math.pi))
    return th, float(math.remainder(ph, 2 * math.pi))


def _polish_equator(terms, d, N, phi, width):
    res = minimize_scalar(lambda p: float(equator_value(terms, p, d, N)),
                          bounds=(phi - width, phi + width), method="bounded",
                          options={"xatol": 1e-12})
    return float(math.remainder(res.x, 2 * math.pi))


def find_minima(terms, d, N=None, grid=(720, 1440), value_tol=1e-9, max_minima=16) -> PhaseReport:
    """Global minima of a single-cluster rotor landscape and its phase.

    A dense ``(theta, phi)`` scan seeds local polishing.  Minima within
    ``value_tol`` of the best value are clustered; those with ``|y| < 1e-6``
    are re-polished on the equator and reported with ``y = 0`` exactly.
    """
    terms = list(terms)
    nt, nph = grid
    th = (np.arange(nt) + 0.5) * math.pi / nt
    ph = np.arange(nph) * 2 * math.pi / nph
    T, P = np.meshgrid(th, ph, indexing="ij")
    st = np.sin(T)
    V = classical_value(terms, (st * np.cos(P), np.cos(T), st * np.sin(P)), d, N)
    # include the equator itself so symmetric minima are seeded exactly
    Veq = equator_value(terms, ph, d, N)
    vmin = min(V.min(), Veq.min())
    scale = max(1.0, float(np.max(np.abs(V))))
    # grid local minima (periodic in phi)
    loc = np.ones_like(V, dtype=bool)
    for ax, roll in ((1, 1), (1, -1)):
        loc &= V <= np.roll(V, roll, axis=ax)
    up = np.vstack([V[1:], np.full((1, nph), np.inf)])
    dn = np.vstack([np.full((1, nph), np.inf), V[:-1]])
    loc &= (V <= up) & (V <= dn)
    seeds = [(T[i, j], P[i, j], V[i, j]) for i, j in zip(*np.nonzero(loc))]
    eqloc = (Veq <= np.roll(Veq, 1)) & (Veq <= np.roll(Veq, -1))
    seeds += [(math.pi / 2, ph[j], Veq[j]) for j in np.nonzero(eqloc)[0]]
    seeds.sort(key=lambda s: s[2])
    coarse_tol = 1e-3 * scale + (V.max() - V.min()) * 1e-3
    seeds = [s for s in seeds if s[2] <= vmin + coarse_tol][: 4 * max_minima]

    width = 2 * math.pi / nph * 2
    found = []
    for t0, p0, _ in seeds:
        t1, p1 = _polish(terms, d, N, t0, p0)
        if abs(math.cos(t1)) < 1e-6:
            t1 = math.pi / 2
            p1 = _polish_equator(terms, d, N, p1, width)
        val = float(classical_value(terms, RotorPoint(t1, p1), d, N))
        found.append(RotorPoint(t1, p1, val))
    best = min(p.value for p in found)
    found = [p for p in found if p.value <= best + value_tol * scale]
    minima = []
    for p in sorted(found, key=lambda p: (p.value, abs(p.phi))):
        if all(np.linalg.norm(np.subtract(p.xyz, m.xyz)) > 1e-3 for m in minima):
            minima.append(p)
        if len(minima) >= max_minima:
            break

    f = lambda x: float(equator_value(terms, x, d, N))
    f2 = second_derivative(f)
    f0 = f(0.0)
    phi0 = min(abs(m.phi) for m in minima)
    if abs(f2) < CRIT_TOL * max(abs(f0), 1.0):
        phase = Phase.CRITICAL
    elif phi0 > PHI_TOL:
        phase = Phase.SCRAMBLED
    else:
        phase = Phase.PURIFIED
        phi0 = 0.0
    return PhaseReport(phase, minima, phi0 if phase is not Phase.CRITICAL else None,
                       len(minima), [f2], {"value": best, "f0": f0})


# ------------------------------------------------------------ closed forms

def alpha_critical(q: int, d) -> float:
    """Critical single-body measurement strength against ``q``-body unitaries."""
    if q < 1:
        raise ValueError("q must be >= 1")
    u = 0.0 if is_inf(d) else 1.0 / d
    return 2 * q * (u ** q + 2.0 ** (1 - q) * (1 + u) ** (q - 1) * (q - 1 - q * u))


def d_critical(qp: int):
    """Qudit dimension separating scrambling and purification for ``q'``-body measurements.

    Returns ``None`` for ``q' = 1`` (always purified) and ``inf`` for ``q' = 2``.
    """
    if qp < 1:
        raise ValueError("q' must be >= 1")
    if qp == 1:
        return None
    if qp == 2:
        return INF
    return qp / (qp - 2)


def effective_oscillator(qp: int, d) -> OscillatorCoeffs:
    """Kinetic and potential coefficients of the small-fluctuation oscillator at ``phi = 0``."""
    if qp < 1:
        raise ValueError("q' must be >= 1")
    return OscillatorCoeffs(float((qp - 1) * (d - 1)), float(qp - (qp - 2) * d))


def mipt_terms(q: int, alpha: float):
    """``q``-body unitaries plus single-qudit measurements of strength ``alpha``."""
    return [unitary(q), measure(1, alpha=alpha)]


def alpha_critical_numeric(q: int, d, bracket=(1e-9, 50.0)) -> float:
    """Root of ``d^2 L/d phi^2 (0)`` in ``alpha`` from the rotor landscape."""
    def f2(a):
        return second_derivative(lambda x: float(equator_value(mipt_terms(q, a), x, d)), h=1e-2)
    return brentq(f2, *bracket, xtol=1e-12)


def d_critical_numeric(qp: int, bracket=(1.05, 60.0)) -> float:
    """Root in continuous ``d`` of the curvature at ``phi = 0`` for ``q'``-body measurements."""
    def f2(d):
        return second_derivative(lambda x: float(equator_value([measure(qp)], x, d)), h=1e-2)
    return brentq(f2, *bracket, xtol=1e-12)


def _log_page(n, N, logt):
    # -log[(t^n + t^(N-n)) / (1 + t^N)] with t = exp(logt) <= 1
    n = np.asarray(n, dtype=float)
    num = np.logaddexp(n * logt, (N - n) * logt)
    den = np.logaddexp(0.0, N * logt)
    return -(num - den)


def page_curve_analytic(N: int, n, mode: str = "UnitaryOnly", d=None, phi0=None):
    """Page-like steady-state entropy.

    ``mode='UnitaryOnly'`` uses ratio ``1/d``; ``mode='LargeD'`` uses
    ``tan(pi/4 - phi0/2)``, the inverse effective dimension of the broken phase.
    """
    if mode == "UnitaryOnly":
        logt = -math.inf if is_inf(d) else -math.log(d)
    elif mode == "LargeD":
        t = math.tan(math.pi / 4 - phi0 / 2)
        logt = math.log(t) if t > 0 else -math.inf
    else:
        raise ValueError(f"unknown mode {mode!r}")
    nn = np.asarray(n)
    if np.any((nn < 0) | (nn > N)):
        raise ValueError("n out of range")
    if math.isinf(logt):
        out = np.where((nn == 0) | (nn == N), 0.0, math.inf)
    else:
        out = _log_page(nn, N, logt)
    return float(out) if np.ndim(out) == 0 else out


def u1_steady_entropy(N: int, n):
    """Steady entropy of the ``q'=2``, ``d=inf`` measurement model.

    Odd ``n`` gives ``inf``.  Even ``n`` uses the closed form of the
    ``S^y = 0`` null vector; see the decisions ledger for the sign of the
    Gamma-ratio term.
    """
    if N % 2:
        raise NotImplementedError("odd N is not supported")
    nn = np.asarray(n)
    if np.any((nn < 0) | (nn > N)):
        raise ValueError("n out of range")
    nf = nn.astype(float)
    lc = 0.5 * (gammaln(N + 1.0) - gammaln(nf + 1) - gammaln(N - nf + 1))
    gr = (gammaln(N / 2 + 1) + gammaln((N - nf + 1) / 2) + gammaln((nf + 1) / 2)
          - gammaln(N / 2 + 0.5) - gammaln(0.5) - gammaln((N - nf) / 2 + 1) - gammaln(nf / 2 + 1))
    out = np.where(nn % 2 == 1, math.inf, lc - 0.5 * gr)
    out = np.where((nn == 0) | (nn == N), 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def lattice_scrambled_entropy(N: int, d, V: int, a):
    """Entropy of ``a`` of ``V`` clusters in the globally scrambled lattice state."""
    aa = np.asarray(a)
    if np.any((aa < 0) | (aa > V)):
        raise ValueError("a must lie in [0, V]")
    ld = math.log(d)
    af = aa.astype(float)
    out = np.logaddexp(N * V * ld, 0.0) - np.logaddexp(N * (V - af) * ld, N * af * ld)
    return float(out) if np.ndim(out) == 0 else out


# ------------------------------------------------------------ two clusters

def two_cluster_terms(alpha1, alpha2, beta, d):
    """Two-body intra unitaries, single-qudit measurements and (1,1) inter unitaries."""
    lam = lambda a: 2 * d * d * (d + 1) * a
    return [unitary(2, Preset.SCALED, d ** -2, cluster=0),
            unitary(2, Preset.SCALED, d ** -2, cluster=1),
            measure(1, Preset.RAW, lam(alpha1), cluster=0),
            measure(1, Preset.RAW, lam(alpha2), cluster=1),
            unitary_inter(1, Preset.SCALED, beta * d ** -2)]


def two_cluster_value(alpha1, alpha2, beta, d, phi1, phi2):
    """Large-d rotor value ``L/N`` of the two-cluster model on the ``y = 0`` circles."""
    x1, z1, x2, z2 = np.cos(phi1), np.sin(phi1), np.cos(phi2), np.sin(phi2)
    return (0.5 * (x1 ** 2 + x2 ** 2 + 2 * beta * x1 * x2)
            - 0.5 * (d * d - 1) * (z1 ** 2 + z2 ** 2 + 2 * beta * z1 * z2)
            - (beta + 1) * d * (x1 + x2) - 2 * d * (alpha1 * x1 + alpha2 * x2))


def two_cluster_hessian(alpha1, alpha2, beta, d):
    base = -d * d - beta + (beta + 1) * d
    h12 = -(d * d - 1) * beta
    return np.array([[base + 2 * d * alpha1, h12], [h12, base + 2 * d * alpha2]])


def two_cluster_phase(alpha1, alpha2, beta, d, grid=181) -> PhaseReport:
    """Phase of the two-cluster model from the Hessian at ``phi1 = phi2 = 0``."""
    if min(alpha1, alpha2, beta) < 0 or d < 2:
        raise ValueError("need alpha1, alpha2, beta >= 0 and d >= 2")
    H = two_cluster_hessian(alpha1, alpha2, beta, d)
    ev = np.linalg.eigvalsh(H)
    phase = Phase.PURIFIED if ev[0] > 0 else Phase.SCRAMBLED
    g = np.linspace(-math.pi, math.pi, grid)
    P1, P2 = np.meshgrid(g, g, indexing="ij")
    V = two_cluster_value(alpha1, alpha2, beta, d, P1, P2)
    f = lambda p: float(two_cluster_value(alpha1, alpha2, beta, d, p[0], p[1]))
    order = np.argsort(V, axis=None)[:64]
    pts = []
    for k in order:
        i, j = np.unravel_index(k, V.shape)
        r = minimize(f, [P1[i, j], P2[i, j]], method="Nelder-Mead",
                     options={"xatol": 1e-10, "fatol": 1e-14})
        pts.append((r.fun, math.remainder(r.x[0], 2 * math.pi), math.remainder(r.x[1], 2 * math.pi)))
    best = min(p[0] for p in pts)
    minima = []
    for v, a, b in sorted(pts):
        if v > best + 1e-9 * max(1.0, abs(best)):
            continue
        if all(math.hypot(a - m[0].phi, b - m[1].phi) > 1e-3 for m in minima):
            minima.append((RotorPoint.equator(a, v), RotorPoint.equator(b, v)))
    phi0 = max(abs(minima[0][0].phi), abs(minima[0][1].phi))
    return PhaseReport(phase, minima, phi0 if phase is Phase.SCRAMBLED else 0.0,
                       1 if phase is Phase.PURIFIED else 2, [float(e) for e in ev],
                       {"value": best, "hessian": H.tolist()})


def two_cluster_boundary_alpha2(alpha1, beta, d):
    """``alpha2`` on the purified/scrambled boundary for given ``alpha1``.

    Returns ``nan`` when no non-negative boundary exists.
    """
    base = -d * d - beta + (beta + 1) * d
    h11 = base + 2 * d * alpha1
    if h11 <= 0:
        return math.nan
    a2 = ((d * d - 1) ** 2 * beta ** 2 / h11 - base) / (2 * d)
    return a2 if a2 >= 0 else math.nan


# ------------------------------------------------------------ landscape scans

def equator_phi0(terms, d, N=None, ngrid=2048) -> float:
    """Angle ``|phi|`` of the lowest equator point, polished by bounded Brent search."""
    ph = np.linspace(0.0, math.pi, ngrid + 1)
    v = equator_value(terms, ph, d, N)
    k = int(np.argmin(v))
    step = math.pi / ngrid
    lo, hi = max(0.0, ph[k] - step), min(math.pi, ph[k] + step)
    res = minimize_scalar(lambda p: float(equator_value(terms, p, d, N)), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-14})
    best = min((float(res.x), float(res.fun)), (0.0, float(v[0])), key=lambda t: t[1])
    return best[0]


def alpha_critical_scan(q: int, d, lo: float = 0.0, hi: float = 50.0, tol: float = 1e-9) -> float:
    """Bisection in ``alpha`` on whether the equator minimum leaves ``phi = 0``."""
    def broken(a):
        return equator_phi0(mipt_terms(q, a), d) > PHI_TOL
    if not broken(lo) or broken(hi):
        raise ValueError("no symmetry-breaking transition inside the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if broken(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def landscape_grid(terms, d, N=None, ntheta=181, nphi=361):
    """Rotor values on a regular ``(theta, phi)`` grid for plotting and export."""
    th = np.linspace(0.0, math.pi, ntheta)
    ph = np.linspace(-math.pi, math.pi, nphi)
    T, P = np.meshgrid(th, ph, indexing="ij")
    st = np.sin(T)
    return th, ph, classical_value(terms, (st * np.cos(P), np.cos(T), st * np.sin(P)), d, N)
