"""Spatially structured models: two coupled clusters and the measured chain.

The chain Lindbladian acts on ``L`` sites of spin ``Nsite/2`` with per-site
rotor operators ``a = S^a / (Nsite/2)``.  Entries are assembled with ``iS^y``
so every matrix stays real.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sps
from scipy.linalg import expm
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .dynamics import DegenerateInputError, EntropyCurve
from .lindblad import LindbladOperator, ModelSpec, ResourceLimitError, build_model
from .rotor import Phase, two_cluster_hessian, two_cluster_terms
from .spin import INF, build_spin_ops, is_inf

MAX_DIM = 2 ** 24


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class InsufficientDataError(ValueError):
    pass


class BC(str, Enum):
    PBC = "PBC"
    OBC = "OBC"


@dataclass(frozen=True)
class ChainSpec:
    L: int
    Nsite: int = 1
    d: float = INF
    bc: BC = BC.PBC
    includeFiniteDTerms: bool = True

    def __post_init__(self):
        object.__setattr__(self, "bc", BC(self.bc))
        if self.L < 2:
            raise ValueError("L must be >= 2")
        if self.Nsite not in (1, 2):
            raise ValueError("Nsite must be 1 or 2")
        if not (is_inf(self.d) or self.d >= 2):
            raise ValueError("d must be >= 2 or inf")
        if self.dim > MAX_DIM:
            raise ResourceLimitError(f"dimension {self.dim} exceeds {MAX_DIM}")

    @property
    def dim(self) -> int:
        return (self.Nsite + 1) ** self.L

    @property
    def bonds(self):
        b = [(i, i + 1) for i in range(self.L - 1)]
        if self.bc is BC.PBC and self.L > 2:
            b.append((self.L - 1, 0))
        return b


@dataclass
class ChainGroundState:
    vector: np.ndarray
    energy: float
    gapToFirstExcited: float
    signNormalized: bool
    residual: float = 0.0


def _site_ops(Nsite):
    rep = build_spin_ops(Nsite)
    s = Nsite / 2
    return {k: sps.csr_matrix(getattr(rep, k) / s) for k in ("Sx", "iSy", "Sz")}


def _embed(op, i, L, m):
    left = sps.identity(m ** i, format="csr")
    right = sps.identity(m ** (L - i - 1), format="csr")
    return sps.kron(sps.kron(left, op, format="csr"), right, format="csr")


def build_chain_lindblad(spec: ChainSpec, rotated: bool = False) -> sps.csr_matrix:
    """Sparse real symmetric chain Lindbladian (per cluster size ``N``).

    With ``rotated=True`` odd sites are conjugated by ``exp(i pi S^y)``, which
    flips the sign of their ``x`` and ``z``.
    """
    L, m = spec.L, spec.Nsite + 1
    ops = _site_ops(spec.Nsite)
    X = [_embed(ops["Sx"], i, L, m) for i in range(L)]
    Y = [_embed(ops["iSy"], i, L, m) for i in range(L)]
    Z = [_embed(ops["Sz"], i, L, m) for i in range(L)]
    if rotated:
        for i in range(1, L, 2):
            X[i], Z[i] = -X[i], -Z[i]
    u = 0.0 if is_inf(spec.d) else 1.0 / spec.d
    H = sps.csr_matrix((spec.dim, spec.dim))
    for i, j in spec.bonds:
        xx, zz = X[i] @ X[j], Z[i] @ Z[j]
        yy = -(Y[i] @ Y[j])  # y_i y_j = -(iy_i)(iy_j)
        H = H - xx - zz + yy
        if spec.includeFiniteDTerms and u > 0:
            H = H - 2 * u * (X[i] + X[j]) - u * u * (xx + yy - zz)
    H = H.tocsr()
    H.eliminate_zeros()
    return H


def staggered_sector(spec: ChainSpec, value: float = 0) -> np.ndarray:
    """Basis indices with ``sum_i (-1)^i m_i = value``; conserved by the unrotated chain at ``d = inf``.

    ``value`` is half-integer when ``L * Nsite`` is odd.
    """
    if abs(2 * value - round(2 * value)) > 1e-12:
        raise ValueError("value must be an integer or half-integer")
    m = spec.Nsite + 1
    idx = np.arange(spec.dim)
    tot = np.zeros(spec.dim, dtype=int)
    for i in range(spec.L):
        digit = (idx // m ** (spec.L - 1 - i)) % m
        mz2 = spec.Nsite - 2 * digit  # 2 * S^z of the site
        tot += mz2 if i % 2 == 0 else -mz2
    return np.nonzero(tot == round(2 * value))[0]


def chain_ground_state(matrix, seed: int = 0, tol: float = 1e-10, maxiter: int | None = None,
                       sector: np.ndarray | None = None) -> ChainGroundState:
    """Lowest eigenpair by implicitly restarted Lanczos with a seeded start vector.

    ``sector`` restricts the solve to a list of basis indices; the vector is
    embedded back into the full space.
    """
    H = sps.csr_matrix(matrix)
    full = H.shape[0]
    if sector is not None:
        H = H[sector][:, sector]
    n = H.shape[0]
    rng = np.random.default_rng(seed)
    v0 = rng.random(n) + 0.5
    if n <= 64:
        e, v = np.linalg.eigh(H.toarray())
        e, v = e[:2], v[:, :2]
    else:
        try:
            e, v = eigsh(H, k=2, which="SA", v0=v0, tol=1e-14, maxiter=maxiter)
        except ArpackNoConvergence as exc:
            raise ConvergenceError("Lanczos did not converge", None) from exc
        o = np.argsort(e)
        e, v = e[o], v[:, o]
    psi = v[:, 0]
    res = float(np.linalg.norm(H @ psi - e[0] * psi))
    if res > tol * max(1.0, abs(e[0])):
        raise ConvergenceError(f"residual {res:.3e} above tolerance", res)
    k = int(np.argmax(np.abs(psi)))
    psi = psi * np.sign(psi[k])
    if sector is not None:
        out = np.zeros(full)
        out[sector] = psi
        psi = out
    return ChainGroundState(psi / np.linalg.norm(psi), float(e[0]), float(e[1] - e[0]), True, res)


def marshall_min(gs: ChainGroundState, zero_tol: float = 1e-12) -> float:
    """Smallest entry of the sign-normalized ground state on its support."""
    v = gs.vector
    supp = np.abs(v) > zero_tol * np.max(np.abs(v))
    return float(np.min(v[supp]))


def _boundary_factors(spec: ChainSpec):
    # rows: <up| and <down| of one site, after exp(chi Sx) when d is finite
    m = spec.Nsite + 1
    R = np.eye(m)
    if not is_inf(spec.d):
        chi = math.atanh(1.0 / spec.d)
        R = expm(chi * build_spin_ops(spec.Nsite).Sx)
    return R[0], R[-1]


def interval_purity(spec: ChainSpec, psi: np.ndarray, sites) -> float:
    """``<X_A| exp(chi sum Sx) |psi>`` with ``A`` the given set of sites."""
    up, dn = _boundary_factors(spec)
    m = spec.Nsite + 1
    t = psi.reshape((m,) * spec.L)
    A = set(int(s) % spec.L for s in sites)
    for i in range(spec.L):
        vec = dn if i in A else up
        t = np.tensordot(vec, t, axes=([0], [0]))
    return float(t)


def chain_steady_entropy(spec: ChainSpec, gs: ChainGroundState, cuts=None,
                         zero_tol: float = 1e-12) -> EntropyCurve:
    """Entropy ``-log(P_A / P_empty)`` of contiguous intervals ``A``.

    ``cuts`` is a list of ``(start, length)`` pairs; by default ``[(0, l)]`` for
    ``l = 0..L``.  Purities below ``zero_tol`` relative to ``P_empty`` give ``inf``.
    """
    if cuts is None:
        cuts = [(0, l) for l in range(spec.L + 1)]
    for s, l in cuts:
        if l < 0 or l > spec.L or s < 0 or s >= spec.L or (spec.bc is BC.OBC and s + l > spec.L):
            raise ValueError(f"interval {(s, l)} outside the chain")
    p0 = interval_purity(spec, gs.vector, [])
    overlap = _product_overlap(spec, gs.vector)
    if abs(p0) == 0 or overlap == 0:
        raise DegenerateInputError("ground state has no weight on the reference state")
    ls, S, P = [], [], []
    for s, l in cuts:
        p = interval_purity(spec, gs.vector, range(s, s + l)) / p0
        P.append(p)
        ls.append(l)
        S.append(math.inf if abs(p) <= zero_tol else -math.log(p) if p > 0 else math.nan)
    return EntropyCurve(np.array(ls), np.array(S), label=f"chain L={spec.L} {spec.bc.value}",
                        info={"purity": P, "P_empty": p0, "overlap_plus_x": overlap,
                              "cuts": [list(c) for c in cuts]})


def _product_overlap(spec, psi):
    # overlap with the product of |+x> site states, i.e. the pure initial state
    m = spec.Nsite + 1
    w, v = np.linalg.eigh(build_spin_ops(spec.Nsite).Sx)
    plus = v[:, -1] * np.sign(v[:, -1].sum())
    t = psi.reshape((m,) * spec.L)
    for _ in range(spec.L):
        t = np.tensordot(plus, t, axes=([0], [0]))
    return float(t)


def cft_fit(curve: EntropyCurve, L: int, bc=BC.PBC, exclude_ends: bool = True):
    """Fit ``S(l) = c * log((L/pi) sin(pi l/L)) + b`` on finite entries.

    Returns ``(c, b, residual)``.
    """
    l = np.asarray(curve.n, dtype=float)
    S = np.asarray(curve.S2, dtype=float)
    keep = np.isfinite(S)
    if exclude_ends:
        keep &= (l > 0) & (l < L)
    if keep.sum() < 4:
        raise InsufficientDataError(f"need >= 4 finite points, got {int(keep.sum())}")
    x = np.log(L / math.pi * np.sin(math.pi * l[keep] / L))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, S[keep], rcond=None)
    r = S[keep] - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(r ** 2)))


# ------------------------------------------------------------ two clusters

def _pair_sector_basis(N: int):
    """Orthonormal sparse bases of the even/odd sectors of the flip ``(i, j) -> (N-i, N-j)``."""
    m = N + 1
    dim = m * m
    idx = np.arange(dim)
    partner = (N - idx // m) * m + (N - idx % m)
    out = {}
    for par in (1, -1):
        rows, cols, vals = [], [], []
        c = 0
        for a in idx:
            b = partner[a]
            if b < a:
                continue
            if a == b:
                if par < 0:
                    continue
                rows.append(a); cols.append(c); vals.append(1.0)
            else:
                r = 1 / math.sqrt(2)
                rows += [a, b]; cols += [c, c]; vals += [r, par * r]
            c += 1
        out[par] = sps.csr_matrix((vals, (rows, cols)), shape=(dim, c))
    return out


@dataclass
class PhaseGrid:
    alpha1: np.ndarray
    alpha2: np.ndarray
    beta: float
    d: float
    N: int
    classical: np.ndarray
    quantum: np.ndarray
    gap: np.ndarray
    splitting: np.ndarray
    info: dict = field(default_factory=dict)

    def rows(self):
        for i, a1 in enumerate(self.alpha1):
            for j, a2 in enumerate(self.alpha2):
                yield a1, a2, self.classical[i, j], self.quantum[i, j], self.gap[i, j]

    def disagreement(self, interior_only: bool = True) -> float:
        """Fraction of points where classical and quantum phases differ.

        With ``interior_only`` a point counts only if all eight neighbours
        share its classical phase.
        """
        c, q = self.classical, self.quantum
        mask = np.ones(c.shape, dtype=bool)
        if interior_only:
            mask[:] = False
            n1, n2 = c.shape
            for i in range(1, n1 - 1):
                for j in range(1, n2 - 1):
                    mask[i, j] = np.all(c[i - 1:i + 2, j - 1:j + 2] == c[i, j])
        if not mask.any():
            return 0.0
        return float(np.mean(c[mask] != q[mask]))


def _unit_builds(N, d, beta):
    base = build_model(ModelSpec(N, d, two_cluster_terms(0.0, 0.0, beta, d), clusters=2)).matrix
    m1 = build_model(ModelSpec(N, d, two_cluster_terms(1.0, 0.0, 0.0, d)[2:3], clusters=2)).matrix
    m2 = build_model(ModelSpec(N, d, two_cluster_terms(0.0, 1.0, 0.0, d)[3:4], clusters=2)).matrix
    return base.tocsr(), m1.tocsr(), m2.tocsr()


def alpha_grid(n: int) -> np.ndarray:
    """Cell-centred grid uniform in ``alpha/(1+alpha)``."""
    u = (np.arange(n) + 0.5) / n
    return u / (1 - u)


def _classify_levels(levels, split_ratio):
    """Find the near-degenerate ground manifold in sorted ``(energy, sector)`` pairs.

    A manifold of ``m >= 2`` levels counts as degenerate when its spread is
    below ``split_ratio`` times the gap above it and it contains both
    inversion sectors.  Decoupled clusters that both break the symmetry give
    ``m = 4``.  Returns ``(scrambled, spread, gap_above)``; for a unique
    ground state the spread is the gap to the other sector.
    """
    e = [x for x, _ in levels]
    for m in range(2, len(e)):
        spread, above = e[m - 1] - e[0], e[m] - e[m - 1]
        if spread < split_ratio * above and len({p for _, p in levels[:m]}) == 2:
            return True, spread, above
    other = next(x for x, p in levels if p != levels[0][1])
    return False, other - e[0], e[1] - e[0]


def two_cluster_quantum_diagram(beta: float, d: float = 2.0, N: int = 60, ngrid: int = 50,
                                alphas=None, split_ratio: float = 0.05, seed: int = 0) -> PhaseGrid:
    """Finite-N ground-state degeneracy over an ``(alpha1, alpha2)`` grid.

    The Hermitized two-cluster Lindbladian is split by the global inversion
    symmetry.  A point is Scrambled when the lowest levels form a
    near-degenerate manifold spanning both sectors, with spread below
    ``split_ratio`` times the gap above it.
    """
    a = alpha_grid(ngrid) if alphas is None else np.asarray(alphas, dtype=float)
    H0, M1, M2 = _unit_builds(N, d, beta)
    bases = _pair_sector_basis(N)
    blocks = {p: (B.T @ H0 @ B, B.T @ M1 @ B, B.T @ M2 @ B) for p, B in bases.items()}
    n = len(a)
    cl = np.empty((n, n), dtype=object)
    qu = np.empty((n, n), dtype=object)
    gap = np.zeros((n, n))
    spl = np.zeros((n, n))
    rng = np.random.default_rng(seed)
    warm = {p: rng.random(B.shape[1]) + 0.5 for p, B in bases.items()}
    for i, a1 in enumerate(a):
        order = range(n) if i % 2 == 0 else range(n - 1, -1, -1)  # snake keeps warm starts close
        for j in order:
            a2 = a[j]
            h_min = np.linalg.eigvalsh(two_cluster_hessian(a1, a2, beta, d))[0]
            cl[i, j] = (Phase.PURIFIED if h_min > 0 else Phase.SCRAMBLED).value
            ev = []
            for p, (h0, m1, m2) in blocks.items():
                H = (h0 + a1 * m1 + a2 * m2).tocsr()
                e, v = eigsh(H, k=3, which="SA", v0=warm[p], tol=1e-12)
                o = np.argsort(e)
                warm[p] = np.abs(v[:, o[0]]) + 1e-3
                ev += [(float(x), p) for x in e[o]]
            ev.sort()
            scr, split, above = _classify_levels(ev, split_ratio)
            spl[i, j] = split
            gap[i, j] = above
            qu[i, j] = (Phase.SCRAMBLED if scr else Phase.PURIFIED).value
    return PhaseGrid(a, a.copy(), beta, d, N, cl, qu, gap, spl,
                     {"split_ratio": split_ratio, "grid": "alpha = u/(1-u), u cell-centred"})
