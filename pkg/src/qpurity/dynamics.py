"""Purity-vector evolution, steady states and Liouvillian spectra.

The purity vector ``P`` (entry ``n`` = average purity of an ``n``-qudit
subsystem) evolves as ``P(t) = Ninv exp(chi Sx) exp(-L t) exp(-chi Sx) Nmap P(0)``
with ``L`` the Hermitized Lindbladian.  Purities span ``exp(O(N))``, so all
transforms run on :class:`ScaledVector` objects or, when double precision is
not enough, in mpmath arithmetic.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp
from scipy.special import logsumexp

from .lindblad import LindbladOperator, ModelSpec, build_model, dehermitize, term_banded
from .spin import ScaledVector, apply_imaginary_rotation, banded_spin_ops, normalization_map


class DegenerateInputError(ValueError):
    """Initial vector has no weight on the requested subspace."""


@dataclass
class PurityTrajectory:
    """Log purities per output time.

    ``logP[k] + logOffset[k]`` is the absolute log purity at ``times[k]``.  The
    offset carries the common exponential decay, which for strong measurement
    presets is large enough to swamp the entropy differences if added in.
    """

    times: np.ndarray
    logP: np.ndarray
    model: ModelSpec | None = None
    info: dict = field(default_factory=dict)
    logOffset: np.ndarray | None = None

    def __post_init__(self):
        if self.logOffset is None:
            self.logOffset = np.zeros(len(self.times))

    def absolute(self) -> np.ndarray:
        return self.logP + self.logOffset[:, None]


@dataclass
class EntropyCurve:
    n: np.ndarray
    S2: np.ndarray
    label: str = ""
    info: dict = field(default_factory=dict)

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.S2)


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    gap: float
    groundDegeneracy: int
    groundVectors: np.ndarray


def initial_purity_product(N: int) -> ScaledVector:
    """Product state: every subsystem purity equals one."""
    return ScaledVector(np.ones(N + 1), 0.0)


def default_degeneracy_tol(evals) -> float:
    rng = float(np.max(evals) - np.min(evals)) if len(evals) > 1 else 0.0
    return max(1e-10, 1e-8 * rng)


# ---------------------------------------------------------------- sectors

def sector_basis(N: int, parity: int) -> np.ndarray:
    """Orthonormal columns spanning the ``n <-> N-n`` even (+1) or odd (-1) sector."""
    cols = []
    for a in range(N // 2 + 1):
        b = N - a
        v = np.zeros(N + 1)
        if a == b:
            if parity < 0:
                continue
            v[a] = 1.0
        else:
            v[a] = v[b] = 1 / math.sqrt(2)
            if parity < 0:
                v[b] = -v[b]
        cols.append(v)
    return np.array(cols).T


def _sector_eigh(H: np.ndarray):
    N = H.shape[0] - 1
    out = []
    for par in (1, -1):
        B = sector_basis(N, par)
        if B.shape[1] == 0:
            continue
        e, v = sla.eigh(B.T @ H @ B)
        out.append((par, e, B @ v))
    return out


# ---------------------------------------------------------------- spectra

def liouvillian_spectrum(op: LindbladOperator, degeneracy_tol: float | None = None) -> SpectralReport:
    """Full dense eigendecomposition of a Hermitized operator."""
    if not op.hermitized:
        raise ValueError("liouvillian_spectrum expects a Hermitized operator")
    e, v = sla.eigh(op.dense())
    tol = default_degeneracy_tol(e) if degeneracy_tol is None else degeneracy_tol
    deg = int(np.sum(e - e[0] < tol))
    gap = float(e[1] - e[0]) if len(e) > 1 else 0.0
    return SpectralReport(e, max(gap, 0.0), deg, v[:, :deg])


def gap_of(op: LindbladOperator) -> float:
    e = sla.eigh(op.dense(), eigvals_only=True, subset_by_index=[0, 1])
    return float(e[1] - e[0])


def gap_scaling_fit(family, Nlist):
    """Least-squares slope of ``log gap`` against ``log N``.

    ``family`` maps ``N`` to a Hermitized :class:`LindbladOperator`.  Returns
    ``(exponent, prefactor, residual, gaps)``; non-positive gaps are skipped.
    """
    Ns, gaps = [], []
    for N in Nlist:
        g = gap_of(family(N))
        if g <= 0:
            warnings.warn(f"non-positive gap at N={N} excluded")
            continue
        Ns.append(N)
        gaps.append(g)
    if len(Ns) < 2:
        raise ValueError("need at least two positive gaps")
    x, y = np.log(Ns), np.log(gaps)
    (slope, icpt), res, *_ = np.polyfit(x, y, 1, full=True)
    resid = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    return float(slope), float(math.exp(icpt)), resid, np.array(gaps)


# ---------------------------------------------------------------- helpers

def _as_scaled(P0, N):
    if P0 is None:
        return initial_purity_product(N)
    if isinstance(P0, ScaledVector):
        return P0
    return ScaledVector(np.asarray(P0, dtype=float), 0.0)


def _to_log_purity(y: np.ndarray, logscale: float, logN: np.ndarray, rel_zero=1e-14):
    """Return log P_n from ``y = Nmap P`` (scaled); exact zeros become -inf."""
    ay = np.abs(y)
    top = np.max(ay)
    out = np.full(y.shape, -np.inf)
    good = ay > rel_zero * top
    out[good] = np.log(ay[good]) + logscale - logN[good]
    neg = good & (y < 0)
    out[neg] = np.nan
    return out


def entropy_from_purity(traj: PurityTrajectory, timeIndex: int = -1) -> EntropyCurve:
    lp = traj.logP[timeIndex]
    with np.errstate(invalid="ignore"):
        S = -(lp - lp[0])
    S[np.isneginf(lp)] = np.inf
    S[0] = 0.0
    return EntropyCurve(np.arange(len(lp)), S, info={"t": float(traj.times[timeIndex])})


# ---------------------------------------------------------------- evolution

def _nonherm_matrix(op: LindbladOperator) -> np.ndarray:
    if not op.hermitized:
        return op.dense()
    if op.diagnostics.get("source", "largeN") == "largeN":
        return build_model(op.meta, hermitized=False, include_constant=op.constant_included).dense()
    return dehermitize(op).dense()


def evolve_purity(op: LindbladOperator, P0=None, times=(0.0,), backend: str = "auto",
                  rtol: float = 1e-11) -> PurityTrajectory:
    """Evolve the purity vector.

    Parameters
    ----------
    op : LindbladOperator
        Single-cluster operator (either frame).
    backend : {"auto", "positive", "eig", "integrate"}
        ``auto`` (default) picks ``positive`` when it applies and falls back
        to ``integrate`` otherwise.  ``positive`` exponentiates ``-K`` in the purity basis, where
        ``K = Ninv Ltilde Nmap`` must have non-positive off-diagonal entries
        (true for every measurement term and for two-body unitaries), so
        every term of the propagator is non-negative and entries keep their
        relative accuracy over any dynamic range.  ``eig`` diagonalizes the
        Hermitized matrix; it is fast but the back-rotation has condition
        number ``exp(chi N)``.  ``integrate`` runs an adaptive explicit
        Runge-Kutta on ``dP/dt = -K P`` and renormalizes between output times.
    """
    if op.meta.clusters != 1:
        raise ValueError("purity evolution is defined for single-cluster operators")
    N = op.meta.N
    if op.dim != N + 1:
        raise ValueError("operator dimension mismatch")
    times = np.asarray(times, dtype=float)
    if not np.all(np.isfinite(times)) or np.any(times < 0):
        raise ValueError("times must be finite and non-negative")
    P0 = _as_scaled(P0, N)
    if P0.coefficients.shape != (N + 1,):
        raise ValueError("initial vector dimension mismatch")
    logN = normalization_map(N).logEntries
    if backend == "auto":
        ok = np.all(P0.coefficients >= 0) and _is_metzler(_purity_generator(op, logN))
        backend = "positive" if ok else "integrate"
    if backend == "positive":
        logP, off = _evolve_positive(op, P0, times, logN)
    elif backend == "eig":
        logP, off = _evolve_eig(op, P0, times, logN)
    elif backend == "integrate":
        logP, off = _evolve_integrate(op, P0, times, logN, rtol)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return PurityTrajectory(times, logP, op.meta, {"backend": backend}, off)


def _evolve_eig(op, P0, times, logN):
    N = op.meta.N
    H = op.dense() if op.hermitized else None
    if H is None:
        from .lindblad import hermitize
        H = hermitize(op).dense()
    e, V = sla.eigh(H)
    # w0 = exp(-chi Sx) Nmap P0
    lv = P0.log_abs() + logN
    w0 = ScaledVector.from_log(lv, np.sign(P0.coefficients) + (P0.coefficients == 0))
    w0.coefficients[P0.coefficients == 0] = 0.0
    w0 = apply_imaginary_rotation(N, op.chi, w0, -1)
    c = V.T @ w0.coefficients
    out = np.empty((len(times), N + 1))
    for k, t in enumerate(times):
        if t == 0:
            out[k] = P0.log_abs()
            continue
        y = V @ (np.exp(-(e - e[0]) * t) * c)
        sv = ScaledVector(y, w0.logScale)
        sv = apply_imaginary_rotation(N, op.chi, sv, +1)
        out[k] = _to_log_purity(sv.coefficients, sv.logScale, logN)
    return out, -e[0] * times


def _purity_generator(op, logN):
    Lt = _nonherm_matrix(op)
    return Lt * np.exp(logN[None, :] - logN[:, None])


def _log_matmul(LA, LB, chunk=8):
    """``log(exp(LA) @ exp(LB))`` for matrices of log-magnitudes.

    Rows of ``LA`` and columns of ``LB`` are shifted to a zero maximum and
    multiplied with BLAS; entries whose shifted sum is small enough that
    underflowed terms could matter are recomputed with an exact log-sum-exp.
    """
    a = np.max(LA, axis=1)
    b = np.max(LB, axis=0)
    a[~np.isfinite(a)] = 0.0
    b[~np.isfinite(b)] = 0.0
    prod = np.exp(LA - a[:, None]) @ np.exp(LB - b[None, :])
    with np.errstate(divide="ignore"):
        out = np.log(prod) + a[:, None] + b[None, :]
    rows = np.nonzero(np.any(prod < 1e-200, axis=1))[0]
    with np.errstate(invalid="ignore"):
        for i in range(0, len(rows), chunk):
            r = rows[i:i + chunk]
            out[r] = logsumexp(LA[r, :, None] + LB[None, :, :], axis=1)
    return out


def _log_propagator(A, t):
    """Entrywise ``log exp(A t)`` for a non-negative matrix ``A``."""
    n = A.shape[0]
    norm = float(np.max(np.sum(A, axis=1))) * t
    k = max(0, math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    tau = t / 2 ** k
    # Taylor base; all terms are non-negative so truncation is the only error
    B = A * tau
    term = np.eye(n)
    E = np.eye(n)
    for j in range(1, 40):
        term = term @ B / j
        E = E + term
        if np.max(term) <= 1e-18 * np.max(E):
            break
    with np.errstate(divide="ignore"):
        LE = np.log(E)
    for _ in range(k):
        LE = _log_matmul(LE, LE)
    return LE


def _is_metzler(K):
    off = K - np.diag(np.diag(K))
    return np.max(off) <= 1e-12 * max(np.max(np.abs(off)), 1e-300)


def _evolve_positive(op, P0, times, logN):
    K = _purity_generator(op, logN)
    if not _is_metzler(K):
        raise ValueError("purity generator has positive off-diagonal entries; use backend='eig'")
    shift = float(np.max(np.diag(K)))
    A = shift * np.eye(len(K)) - K
    A[A < 0] = 0.0
    lp0 = P0.log_abs()
    if np.any(P0.coefficients < 0):
        raise ValueError("positive backend needs a non-negative initial purity vector")
    out = np.empty((len(times), len(lp0)))
    for k, t in enumerate(times):
        if t == 0:
            out[k] = lp0
            continue
        LE = _log_propagator(A, t)
        with np.errstate(invalid="ignore"):
            out[k] = logsumexp(LE + lp0[None, :], axis=1)
    return out, -shift * times


def _evolve_integrate(op, P0, times, logN, rtol):
    K = _purity_generator(op, logN)
    shift = float(np.min(np.linalg.eigvals(K).real))
    A = -(K - shift * np.eye(len(K)))
    y = P0.coefficients.copy()
    ls = P0.logScale
    t_prev = 0.0
    out = np.empty((len(times), len(y)))
    order = np.argsort(times)
    for k in order:
        t = times[k]
        if t > t_prev:
            sol = solve_ivp(lambda _t, v: A @ v, (t_prev, t), y, method="DOP853",
                            rtol=rtol, atol=1e-300)
            y = sol.y[:, -1]
            m = np.max(np.abs(y))
            y = y / m
            ls += math.log(m)
            t_prev = t
        with np.errstate(divide="ignore"):
            out[k] = np.where(y > 0, np.log(np.abs(y)) + ls, np.where(y == 0, -np.inf, np.nan))
    return out, -shift * times


# ---------------------------------------------------------------- steady state

def _ground_space(H, tol):
    blocks = _sector_eigh(H)
    e0 = min(b[1][0] for b in blocks)
    allev = np.sort(np.concatenate([b[1] for b in blocks]))
    if tol is None:
        tol = default_degeneracy_tol(allev)
    vecs, info = [], []
    for par, e, v in blocks:
        sel = np.nonzero(e - e0 < tol)[0]
        for i in sel:
            vecs.append(v[:, i])
            info.append((par, float(e[i]), float(e[i + 1]) if i + 1 < len(e) else np.inf))
    return np.array(vecs).T, info, allev, tol


def steady_state_entropy(op: LindbladOperator, P0=None, degeneracyTol: float | None = None,
                         precision: str | int = "auto") -> EntropyCurve:
    """Late-time entropy curve from the ground-space projection.

    Parameters
    ----------
    precision : {"auto", "double"} or int
        ``double`` keeps everything in float64.  An integer selects that many
        decimal digits in mpmath.  ``auto`` starts in double precision and
        switches to mpmath when some purity is too small for float64 to
        resolve (below ``1e-8`` relative to the largest ``Nmap P`` entry).
    """
    if not op.hermitized:
        raise ValueError("steady_state_entropy expects a Hermitized operator")
    N = op.meta.N
    P0 = _as_scaled(P0, N)
    logN = normalization_map(N).logEntries
    H = op.dense()
    G, info, allev, tol = _ground_space(H, degeneracyTol)

    meta = {"degeneracy": len(info), "tol": tol, "sectors": [i[0] for i in info],
            "E0": float(allev[0])}
    if precision == "double" or precision == "auto":
        lv = P0.log_abs() + logN
        w0 = ScaledVector.from_log(lv, np.sign(P0.coefficients))
        w0 = apply_imaginary_rotation(N, op.chi, w0, -1)
        c = G.T @ w0.coefficients
        if np.max(np.abs(c)) < 1e-300:
            raise DegenerateInputError("initial vector orthogonal to the ground space")
        y = ScaledVector(G @ c, w0.logScale)
        y = apply_imaginary_rotation(N, op.chi, y, +1)
        ay = np.abs(y.coefficients)
        if precision == "double" or np.min(ay) > 1e-8:
            lp = _to_log_purity(y.coefficients, y.logScale, logN)
            return _curve(lp, dict(meta, precision="double"))
        precision = _auto_digits(op)
    lp = _steady_mp(op, P0, info, int(precision))
    return _curve(lp, dict(meta, precision=int(precision)))


def _curve(lp, meta):
    with np.errstate(invalid="ignore"):
        S = -(lp - lp[0])
    S[np.isneginf(lp)] = np.inf
    S[0] = 0.0
    return EntropyCurve(np.arange(len(lp)), S, info=meta)


def _auto_digits(op) -> int:
    N = op.meta.N
    d = op.meta.d
    dl = math.log10(d) if np.isfinite(d) else 1.0
    return int(40 + N * (0.5 * max(dl, 1.0) + 0.35) + op.chi * N)


# ---------------------------------------------------------------- mpmath path

def _mp_hermitized(meta: ModelSpec, mp):
    acc = None
    for t in meta.terms:
        b, _ = term_banded(t, meta.N, meta.d, hermitized=True, include_constant=False, mp=mp)
        acc = b if acc is None else acc + b
    return acc


def _fold(Bm, N, parity, mp):
    """Sector block of a banded inversion-symmetric matrix as row dictionaries."""
    half = N // 2
    size = half + 1 if (parity > 0 or N % 2 == 1) else half
    if parity < 0 and N % 2 == 0:
        size = half
    rows = []
    sq2 = mp.sqrt(2)
    mid = N / 2
    for a in range(size):
        row = {}
        for b in range(max(0, a - Bm.bandwidth - 1), size):
            if abs(a - b) > Bm.bandwidth and a + b < N - Bm.bandwidth:
                continue
            direct = Bm.entry(a, b) if abs(a - b) <= Bm.bandwidth else 0
            cross = Bm.entry(a, N - b) if abs(a - (N - b)) <= Bm.bandwidth else 0
            a_mid, b_mid = a == mid, b == mid
            if a_mid and b_mid:
                val = direct
            elif a_mid or b_mid:
                val = sq2 * direct
            else:
                val = direct + parity * cross
            if val != 0:
                row[b] = mp.mpf(val)
        rows.append(row)
    return rows


def _unfold(x, N, parity, mp):
    v = [mp.mpf(0)] * (N + 1)
    inv = 1 / mp.sqrt(2)
    for a, xa in enumerate(x):
        b = N - a
        if a == b:
            v[a] = xa
        else:
            v[a] = xa * inv
            v[b] = parity * xa * inv
    return v


def _band_cholesky(rows, sigma, mp):
    n = len(rows)
    bw = max((abs(a - b) for a, r in enumerate(rows) for b in r), default=0)
    L = [dict() for _ in range(n)]
    for i in range(n):
        for j in range(max(0, i - bw), i + 1):
            s = rows[i].get(j, 0) - (sigma if i == j else 0)
            for k in range(max(0, i - bw, j - bw), j):
                s -= L[i].get(k, 0) * L[j].get(k, 0)
            if i == j:
                if s <= 0:
                    return None
                L[i][i] = mp.sqrt(s)
            else:
                L[i][j] = s / L[j][j]
    return L, bw


def _chol_solve(Lb, b):
    L, bw = Lb
    n = len(L)
    y = list(b)
    for i in range(n):
        s = y[i]
        for k, v in L[i].items():
            if k < i:
                s -= v * y[k]
        y[i] = s / L[i][i]
    x = y
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, min(n, i + bw + 1)):
            v = L[k].get(i)
            if v is not None:
                s -= v * x[k]
        x[i] = s / L[i][i]
    return x


def _rows_matvec(rows, x):
    return [sum((v * x[b] for b, v in r.items()), 0) for r in rows]


def _mp_ground(rows, e_float, gap_float, mp):
    """Lowest eigenvector of a positive-shifted band matrix by inverse iteration."""
    n = len(rows)
    dps = mp.dps
    scale = max(1.0, abs(e_float))
    x = [mp.mpf(1)] * n
    delta = max(1e-6 * gap_float, 1e-12 * scale)
    sigma = mp.mpf(e_float) - delta
    for _ in range(8):
        fac = _band_cholesky(rows, sigma, mp)
        if fac is not None:
            break
        delta *= 10
        sigma = mp.mpf(e_float) - delta
    else:
        raise RuntimeError("could not find a shift below the ground energy")
    rq_prev = None
    target = mp.mpf(10) ** (-(dps - 10))
    for it in range(400):
        x = _chol_solve(fac, x)
        nrm = mp.sqrt(sum(v * v for v in x))
        x = [v / nrm for v in x]
        Ax = _rows_matvec(rows, x)
        rq = sum(a * b for a, b in zip(x, Ax))
        res = mp.sqrt(sum((a - rq * b) ** 2 for a, b in zip(Ax, x)))
        if res < target * scale:
            break
        if rq_prev is not None and abs(rq - rq_prev) < mp.mpf(10) ** (-(dps // 3)) * scale:
            # tighten the shift once the Rayleigh quotient has settled
            eps = mp.mpf(10) ** (-(dps // 4)) * gap_float
            new = _band_cholesky(rows, rq - eps, mp)
            if new is not None:
                fac = new
        rq_prev = rq
    return x, rq


def _mp_rotate(vec, N, chi, sign, mp):
    """exp(sign * chi * Sx) vec by Taylor series over sub-steps."""
    if chi == 0:
        return list(vec)
    ops = banded_spin_ops(N, mp)
    Sx = ops["Sx"]
    chi = mp.mpf(chi)
    total = chi * N / 2
    steps = max(1, int(mp.ceil(total / 2)))
    h = sign * chi / steps
    v = np.array(vec, dtype=object)
    tiny = mp.mpf(10) ** (-(mp.dps + 5))
    for _ in range(steps):
        term = v.copy()
        acc = v.copy()
        k = 1
        while True:
            term = Sx.matvec(term) * (h / k)
            acc = acc + term
            if max(abs(t) for t in term) <= tiny * max(abs(a) for a in acc):
                break
            k += 1
        v = acc
    return list(v)


def _steady_mp(op, P0, info, digits):
    import mpmath

    mp = mpmath.mp.clone() if hasattr(mpmath.mp, "clone") else mpmath.mp
    old = mpmath.mp.dps
    mpmath.mp.dps = digits
    mp = mpmath.mp
    try:
        meta = op.meta
        N = meta.N
        Bm = _mp_hermitized(meta, mp)
        logN = normalization_map(N).logEntries
        # w0 = exp(-chi Sx) Nmap P0 in mp
        p0 = [mp.mpf(float(c)) * mp.e ** mp.mpf(P0.logScale) for c in P0.coefficients]
        nm = [mp.sqrt(mp.binomial(N, k)) for k in range(N + 1)]
        w0 = _mp_rotate([a * b for a, b in zip(nm, p0)], N, op.chi, -1, mp)
        # float sector spectra for shifts
        H = op.dense()
        const = float(np.mean(np.diag(H - Bm.to_float().to_dense())))
        psi = [mp.mpf(0)] * (N + 1)
        for par in sorted(set(i[0] for i in info)):
            B = sector_basis(N, par)
            es = sla.eigh(B.T @ (H - const * np.eye(N + 1)) @ B, eigvals_only=True, subset_by_index=[0, 1])
            rows = _fold(Bm, N, par, mp)
            x, _ = _mp_ground(rows, float(es[0]), float(es[1] - es[0]), mp)
            full = _unfold(x, N, par, mp)
            c = sum(a * b for a, b in zip(full, w0))
            psi = [p + c * f for p, f in zip(psi, full)]
        y = _mp_rotate(psi, N, op.chi, +1, mp)
        top = max(abs(v) for v in y)
        zero = top * mp.mpf(10) ** (-(digits - 25))
        lp = np.empty(N + 1)
        for k, v in enumerate(y):
            if abs(v) <= zero:
                lp[k] = -np.inf
            elif v < 0:
                lp[k] = np.nan
            else:
                lp[k] = float(mp.log(v / top)) - logN[k]
        return lp
    finally:
        mpmath.mp.dps = old
