"""Symmetric-sector Lindbladians for replicated purity dynamics.

Every large-N term is a signed sum of powers of linear "brackets"

    B = c0 * N * I + cx * Sx + ciy * iSy + cz * Sz

multiplied by ``g * N**(1 - order)`` where ``g`` is an N-free coupling fixed by
the scaling preset.  Brackets are written with ``u = 1/d`` so that ``d = inf``
is just ``u = 0``.  The same recipe drives the dense builds, the
high-precision builds and the classical rotor values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import product as iproduct

import numpy as np
import scipy.sparse as sps

from .banded import Banded
from .spin import (INF, SpinRep, banded_spin_ops, build_spin_ops, chi_of,
                   inversion_operator, is_inf, normalization_map, rotation_matrix)


class ResourceLimitError(RuntimeError):
    """Requested build exceeds a hard size limit."""


class Kind(str, Enum):
    UNITARY_INTRA = "UnitaryIntra"
    MEASURE_INTRA = "MeasureIntra"
    UNITARY_INTER = "UnitaryInter"
    MEASURE_INTER = "MeasureInter"


class Preset(str, Enum):
    PAPER_UNITARY = "PaperUnitary"          # J = q! d^{-2q} N^{1-q}
    PAPER_MEASURE = "PaperMeasure"          # lam = q'! d^{2q'} N^{1-q'}
    MIPT_MEASURE = "MIPTMeasure"            # lam = d (d+1) alpha
    TWO_CLUSTER_UNITARY = "TwoClusterUnitary"  # J = (q!)^2 d^{-4q} N^{1-2q}
    TWO_CLUSTER_MEASURE = "TwoClusterMeasure"  # lam = (q'!)^2 d^{4q'} N^{1-2q'}
    RAW = "Raw"                             # strength is the bare J or lam
    SCALED = "Scaled"                       # strength g0 with J (or lam) = g0 N^{1-order}


_DEFAULT_PRESET = {
    Kind.UNITARY_INTRA: Preset.PAPER_UNITARY,
    Kind.MEASURE_INTRA: Preset.PAPER_MEASURE,
    Kind.UNITARY_INTER: Preset.TWO_CLUSTER_UNITARY,
    Kind.MEASURE_INTER: Preset.TWO_CLUSTER_MEASURE,
}

_ALLOWED = {
    Kind.UNITARY_INTRA: {Preset.PAPER_UNITARY, Preset.RAW, Preset.SCALED},
    Kind.MEASURE_INTRA: {Preset.PAPER_MEASURE, Preset.MIPT_MEASURE, Preset.RAW, Preset.SCALED},
    Kind.UNITARY_INTER: {Preset.TWO_CLUSTER_UNITARY, Preset.RAW, Preset.SCALED},
    Kind.MEASURE_INTER: {Preset.TWO_CLUSTER_MEASURE, Preset.RAW, Preset.SCALED},
}


@dataclass(frozen=True)
class TermSpec:
    """One Lindbladian term.

    Parameters
    ----------
    kind : Kind
    q : int
        Number of qudits per coupling (per cluster for inter-cluster terms).
    preset : Preset, optional
        Defaults to the standard preset of ``kind``.
    strength : float, optional
        Bare ``J``/``lambda`` for ``Raw``, ``g0`` for ``Scaled``.
    alpha : float, optional
        Measurement strength for ``MIPTMeasure``.
    cluster : int
        Target cluster (0 or 1) of an intra term inside a two-cluster model.
    """

    kind: Kind
    q: int
    preset: Preset | None = None
    strength: float | None = None
    alpha: float | None = None
    cluster: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.preset is None:
            object.__setattr__(self, "preset", _DEFAULT_PRESET[self.kind])
        object.__setattr__(self, "preset", Preset(self.preset))
        if not isinstance(self.q, (int, np.integer)) or self.q < 1:
            raise ValueError(f"q must be a positive integer, got {self.q!r}")
        if self.preset not in _ALLOWED[self.kind]:
            raise ValueError(f"preset {self.preset.value} not valid for {self.kind.value}")
        if self.preset in (Preset.RAW, Preset.SCALED):
            if self.strength is None or not self.strength >= 0:
                raise ValueError("Raw/Scaled presets need a strength >= 0")
        if self.preset is Preset.MIPT_MEASURE and (self.alpha is None or not self.alpha >= 0):
            raise ValueError("MIPTMeasure needs alpha >= 0")
        if self.cluster not in (0, 1):
            raise ValueError("cluster must be 0 or 1")

    @property
    def inter(self) -> bool:
        return self.kind in (Kind.UNITARY_INTER, Kind.MEASURE_INTER)

    @property
    def unitary(self) -> bool:
        return self.kind in (Kind.UNITARY_INTRA, Kind.UNITARY_INTER)

    @property
    def order(self) -> int:
        return 2 * self.q if self.inter else self.q

    @property
    def n_free(self) -> bool:
        """True when the rotor value of this term does not depend on N."""
        if self.preset is Preset.RAW:
            return self.order == 1
        if self.preset is Preset.MIPT_MEASURE:
            return self.q == 1
        return True

    def raw_strength(self, N: int, d) -> float:
        """Bare ``J`` (unitary) or ``lambda`` (measurement) for this preset."""
        q, fq = int(self.q), math.factorial(self.q)
        N = float(N)
        p = self.preset
        if p is Preset.RAW:
            return float(self.strength)
        if p is Preset.SCALED:
            return float(self.strength) * N ** (1 - self.order)
        if is_inf(d):
            return 0.0 if p in (Preset.PAPER_UNITARY, Preset.TWO_CLUSTER_UNITARY) else INF
        if p is Preset.PAPER_UNITARY:
            return fq * d ** (-2 * q) * N ** (1 - q)
        if p is Preset.PAPER_MEASURE:
            return fq * d ** (2 * q) * N ** (1 - q)
        if p is Preset.MIPT_MEASURE:
            return d * (d + 1) * self.alpha
        if p is Preset.TWO_CLUSTER_UNITARY:
            return fq ** 2 * d ** (-4 * q) * N ** (1 - 2 * q)
        if p is Preset.TWO_CLUSTER_MEASURE:
            return fq ** 2 * d ** (4 * q) * N ** (1 - 2 * q)
        raise AssertionError(p)

    def to_dict(self):
        return {"kind": self.kind.value, "q": int(self.q), "preset": self.preset.value,
                "strength": self.strength, "alpha": self.alpha, "cluster": self.cluster}


def unitary(q, preset=None, strength=None, cluster=0):
    return TermSpec(Kind.UNITARY_INTRA, q, preset, strength, None, cluster)


def measure(q, preset=None, strength=None, alpha=None, cluster=0):
    if alpha is not None and preset is None:
        preset = Preset.MIPT_MEASURE
    return TermSpec(Kind.MEASURE_INTRA, q, preset, strength, alpha, cluster)


def unitary_inter(q, preset=None, strength=None):
    return TermSpec(Kind.UNITARY_INTER, q, preset, strength)


def measure_inter(q, preset=None, strength=None):
    return TermSpec(Kind.MEASURE_INTER, q, preset, strength)


@dataclass(frozen=True)
class ModelSpec:
    N: int
    d: float
    terms: tuple
    clusters: int = 1

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not isinstance(self.N, (int, np.integer)) or isinstance(self.N, bool):
            raise ValueError(f"N must be an integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not (is_inf(self.d) or self.d >= 2):
            raise ValueError(f"d must be >= 2 or inf, got {self.d}")
        if self.clusters not in (1, 2):
            raise ValueError("clusters must be 1 or 2")
        for t in self.terms:
            if t.inter and self.clusters != 2:
                raise ValueError("inter-cluster terms need clusters = 2")
            if self.clusters == 1 and t.cluster != 0:
                raise ValueError("single-cluster model cannot target cluster 1")

    @property
    def chi(self) -> float:
        return chi_of(self.d)

    def to_dict(self):
        return {"N": self.N, "d": "inf" if is_inf(self.d) else self.d,
                "clusters": self.clusters, "terms": [t.to_dict() for t in self.terms]}


@dataclass
class LindbladOperator:
    """Built Lindbladian; ``matrix`` is dense for one cluster, CSR for two."""

    matrix: object
    chi: float
    hermitized: bool
    meta: ModelSpec
    constant_included: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if sps.issparse(self.matrix) else np.asarray(self.matrix)

    def __add__(self, other: "LindbladOperator") -> "LindbladOperator":
        if self.hermitized != other.hermitized or self.chi != other.chi:
            raise ValueError("cannot add operators in different frames")
        terms = tuple(self.meta.terms) + tuple(other.meta.terms)
        meta = replace(self.meta, terms=terms)
        src = self.diagnostics.get("source")
        diag = {"source": src} if src == other.diagnostics.get("source") else {"source": "mixed"}
        return LindbladOperator(self.matrix + other.matrix, self.chi, self.hermitized, meta,
                                self.constant_included and other.constant_included, diag)

    def ground_subtracted(self) -> "LindbladOperator":
        """Copy with the lowest eigenvalue removed from the diagonal."""
        from scipy.linalg import eigvalsh
        m = self.dense()
        if self.hermitized:
            e0 = eigvalsh(m, subset_by_index=[0, 0])[0]
        else:
            e0 = np.min(np.linalg.eigvals(m).real)
        out = m - e0 * np.eye(m.shape[0])
        if sps.issparse(self.matrix):
            out = sps.csr_matrix(out)
        return LindbladOperator(out, self.chi, self.hermitized, self.meta, False,
                                dict(self.diagnostics, subtracted=float(e0), source="derived"))


# ---------------------------------------------------------------- recipes

def _num(mp):
    if mp is None:
        return float, math.sqrt
    return mp.mpf, mp.sqrt


def couplings(term: TermSpec, N, d, mp=None):
    """Return ``(g, constN)`` for ``term``.

    The matrix is ``g * N**(1-order) * sum(coef * prod(B**q)) + constN * N * I``;
    ``constN`` is ``None`` when the preset makes the constant diverge (``d = inf``).
    ``N`` may be ``None`` for presets whose ``g`` is N-free.
    """
    F, _ = _num(mp)
    q = term.q
    fq = math.factorial(q)
    inf = is_inf(d)
    u = F(0) if inf else F(1) / F(d)
    p = term.preset
    need_n = not term.n_free
    if need_n and N is None:
        raise ValueError(f"{p.value} coupling for order {term.order} depends on N; pass N")
    Nf = F(N) if N is not None else F(1)
    s = F(term.strength) if term.strength is not None else None

    if term.kind in (Kind.UNITARY_INTRA, Kind.UNITARY_INTER):
        fac = fq if term.kind is Kind.UNITARY_INTRA else fq * fq
        dp = 2 * term.order  # d-power absorbed by the u-normalized brackets
        if p in (Preset.PAPER_UNITARY, Preset.TWO_CLUSTER_UNITARY):
            g = F(2)
        else:
            if inf:
                raise ValueError("Raw/Scaled unitary strength needs finite d")
            dd = F(d) ** dp
            g = 2 * dd * s / fac if p is Preset.SCALED else 2 * dd * s * Nf ** (term.order - 1) / fac
        return g, g

    # measurement terms
    if term.kind is Kind.MEASURE_INTRA:
        fac, D_pow = fq, q
    else:
        fac, D_pow = fq * fq, 2 * q
    w = 1 / (1 + u ** D_pow)  # d^k/(d^k+1)
    if p in (Preset.PAPER_MEASURE, Preset.TWO_CLUSTER_MEASURE):
        g = w * w
        const = None if inf else F(d) ** (2 * D_pow)
    elif p is Preset.MIPT_MEASURE:
        a = F(term.alpha)
        # d(d+1)/(d^q+1)^2 written in u
        g = a * (1 + u) * u ** (2 * q - 2) * w * w * Nf ** (q - 1) / fac
        const = None if inf else F(d) * (F(d) + 1) * a * Nf ** (q - 1) / fac
    elif p is Preset.RAW:
        g = s * Nf ** (term.order - 1) * u ** (2 * D_pow) * w * w / fac
        const = s * Nf ** (term.order - 1) / fac
    else:  # SCALED
        g = s * u ** (2 * D_pow) * w * w / fac
        const = s / fac
    return g, const


def brackets(term: TermSpec, d, hermitized=True, mp=None):
    """Signed bracket list ``[(coef, (c0, cx, ciy, cz)), ...]`` for ``term``.

    The same bracket is used in both slots of an inter-cluster product.
    """
    F, sqrt = _num(mp)
    u = F(0) if is_inf(d) else F(1) / F(d)
    s = sqrt(1 - u * u)
    h = F(1) / 2
    z = F(0)
    if term.unitary:
        if hermitized:
            return [(1, (z, 2 * u, z, z)), (-1, (h, u, z, s)), (-1, (h, u, z, -s))]
        return [(1, (z, 2 * u, z, z)), (-1, (h, u, -u, F(1))), (-1, (h, u, u, F(-1)))]
    if hermitized:
        return [(-1, (h, u, z, s)), (-1, (h, u, z, -s)),
                (-1, (u / 2, F(1), -s, z)), (-1, (u / 2, F(1), s, z))]
    return [(-1, (h, u, -u, F(1))), (-1, (h, u, u, F(-1))),
            (-1, (u / 2, F(1), F(-1), u)), (-1, (u / 2, F(1), F(1), -u))]


def _bracket_banded(ops, N, b):
    c0, cx, ciy, cz = b
    out = ops["I"] * (c0 * N)
    for c, key in ((cx, "Sx"), (ciy, "iSy"), (cz, "Sz")):
        if c != 0:
            out = out + ops[key] * c
    return out


def term_banded(term: TermSpec, N: int, d, hermitized=True, include_constant=True, mp=None):
    """Single-cluster term as a :class:`Banded` matrix (float or mpmath entries)."""
    if term.inter:
        raise ValueError("term_banded handles intra-cluster terms only")
    F, _ = _num(mp)
    ops = banded_spin_ops(N, mp)
    g, const = couplings(term, N, d, mp)
    pref = g * F(N) ** (1 - term.order)
    acc = None
    for coef, b in brackets(term, d, hermitized, mp):
        piece = _bracket_banded(ops, F(N), b).power(term.q) * (coef * pref)
        acc = piece if acc is None else acc + piece
    included = True
    if include_constant and const is not None:
        acc = acc + ops["I"] * (const * F(N))
    elif include_constant:
        included = False
    return acc, included


def _dense_term(term, N, d, hermitized, include_constant):
    b, included = term_banded(term, N, d, hermitized, include_constant)
    return b.to_dense(), included


def _sparse_bracket(rep: SpinRep, b):
    c0, cx, ciy, cz = (float(x) for x in b)
    return c0 * rep.N * np.eye(rep.dim) + cx * rep.Sx + ciy * rep.iSy + cz * rep.Sz


def _two_cluster_term(term, N, d, hermitized, include_constant):
    rep = build_spin_ops(N)
    I = sps.identity(N + 1, format="csr")
    if not term.inter:
        m, included = _dense_term(term, N, d, hermitized, include_constant)
        m = sps.csr_matrix(m)
        return (sps.kron(m, I) if term.cluster == 0 else sps.kron(I, m)).tocsr(), included
    g, const = couplings(term, N, d)
    pref = float(g) * N ** (1 - term.order)
    acc = sps.csr_matrix(((N + 1) ** 2, (N + 1) ** 2))
    for coef, b in brackets(term, d, hermitized):
        B = np.linalg.matrix_power(_sparse_bracket(rep, b), term.q)
        Bs = sps.csr_matrix(B)
        acc = acc + (coef * pref) * sps.kron(Bs, Bs, format="csr")
    included = True
    if include_constant and const is not None:
        acc = acc + float(const) * N * sps.identity((N + 1) ** 2, format="csr")
    elif include_constant:
        included = False
    return acc.tocsr(), included


def build_model(model: ModelSpec, hermitized: bool = True, include_constant: bool = True) -> LindbladOperator:
    """Sum of all terms of ``model`` (large-N forms; exact for q = 1 couplings)."""
    N, d = model.N, model.d
    included = True
    if model.clusters == 1:
        acc = np.zeros((N + 1, N + 1))
        for t in model.terms:
            m, inc = _dense_term(t, N, d, hermitized, include_constant)
            acc += m
            included &= inc
    else:
        acc = sps.csr_matrix(((N + 1) ** 2, (N + 1) ** 2))
        for t in model.terms:
            m, inc = _two_cluster_term(t, N, d, hermitized, include_constant)
            acc = acc + m
            included &= inc
        acc = acc.tocsr()
    return LindbladOperator(acc, model.chi, hermitized, model, included, {"source": "largeN"})


def _term_with(kind, q, d, strength, preset, alpha):
    if preset is None and strength is not None:
        preset = Preset.RAW
    return TermSpec(kind, q, preset, strength, alpha)


def build_unitary_largeN(rep, q: int, d, strength=None, preset=None, hermitized=True) -> LindbladOperator:
    """Large-N unitary term; ``strength`` alone means a bare ``J``."""
    N = rep.N if isinstance(rep, SpinRep) else int(rep)
    t = _term_with(Kind.UNITARY_INTRA, q, d, strength, preset, None)
    return build_model(ModelSpec(N, d, (t,)), hermitized)


def build_measure_largeN(rep, q: int, d, strength=None, preset=None, alpha=None, hermitized=True) -> LindbladOperator:
    """Large-N measurement term; ``alpha`` selects the MIPT preset."""
    N = rep.N if isinstance(rep, SpinRep) else int(rep)
    if alpha is not None and preset is None:
        preset = Preset.MIPT_MEASURE
    t = _term_with(Kind.MEASURE_INTRA, q, d, strength, preset, alpha)
    return build_model(ModelSpec(N, d, (t,)), hermitized)


def build_two_cluster(repA, repB, term: TermSpec, d, hermitized=True) -> LindbladOperator:
    NA = repA.N if isinstance(repA, SpinRep) else int(repA)
    NB = repB.N if isinstance(repB, SpinRep) else int(repB)
    if NA != NB:
        raise ValueError("clusters of unequal size are not supported")
    return build_model(ModelSpec(NA, d, (term,), clusters=2), hermitized)


# ---------------------------------------------------------------- exact oracle

def measure_M_matrix(D: int) -> np.ndarray:
    """Projected Haar-measurement block on the ``(I+, I-)`` pair."""
    if D < 2:
        raise ValueError("D must be >= 2")
    return np.ones((2, 2)) / (D * (D + 1))


def _onsite(term: TermSpec, d):
    if term.unitary:
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        B = np.array([[d, 0.0], [1.0, 0.0]])
        C = np.array([[0.0, 1.0], [0.0, d]])
        return [(1.0, A), (-1.0, B), (-1.0, C)]
    App = np.array([[d * d, 0.0], [d, 0.0]])
    Amm = np.array([[0.0, d], [0.0, d * d]])
    Apm = np.array([[0.0, d * d], [0.0, d]])
    Amp = np.array([[d, 0.0], [d * d, 0.0]])
    return [(-1.0, A) for A in (App, Amm, Apm, Amp)]


def _symmetric_basis(N):
    states = np.array(list(iproduct((0, 1), repeat=N)), dtype=int)
    weight = states.sum(axis=1)
    logN = normalization_map(N).logEntries
    V = np.zeros((2 ** N, N + 1))
    V[np.arange(2 ** N), weight] = np.exp(-logN[weight])
    return V


def _apply_site(M, v, site, N):
    # v has shape (2,)*N + (cols,)
    out = np.tensordot(M, v, axes=([1], [site]))
    return np.moveaxis(out, 0, site)


def _elementary_sum(M, q, V, N):
    cols = V.shape[1]
    w = [V.reshape((2,) * N + (cols,))] + [np.zeros((2,) * N + (cols,)) for _ in range(q)]
    for i in range(N):
        for k in range(q, 0, -1):
            w[k] = w[k] + _apply_site(M, w[k - 1], i, N)
    return w[q].reshape(2 ** N, cols)


def build_exact_subset(N: int, d, term: TermSpec) -> LindbladOperator:
    """Exact finite-N non-Hermitized matrix from explicit subset sums on ``2**N`` states."""
    if N > 14:
        raise ResourceLimitError(f"exact subset build limited to N <= 14 (got {N})")
    if term.inter:
        raise ValueError("exact subset build supports single-cluster terms only")
    if is_inf(d):
        raise ValueError("exact subset build needs finite d")
    q = term.q
    if q > N:
        raise ValueError("q larger than N")
    V = _symmetric_basis(N)
    strength = term.raw_strength(N, d)
    acc = np.zeros((2 ** N, N + 1))
    for sign, M in _onsite(term, float(d)):
        acc += sign * _elementary_sum(M, q, V, N)
    L = V.T @ acc
    c = math.comb(N, q)
    if term.unitary:
        L = 2 * strength * (c * d ** (2 * q) * np.eye(N + 1) + d ** q * L)
    else:
        D = d ** q
        L = strength * (c * np.eye(N + 1) + L / (D * (D + 1)) ** 2)
    return LindbladOperator(L, chi_of(d), False, ModelSpec(N, d, (term,)), True, {"source": "exact"})


# ---------------------------------------------------------------- frames

def _frame(op: LindbladOperator, sign: int):
    N = op.meta.N
    M, ls = rotation_matrix(N, op.chi, sign)
    if op.meta.clusters == 2:
        M = np.kron(M, M)
        ls = 2 * ls
    return M, ls


def _conjugate(op, left_sign):
    Ml, ls = _frame(op, left_sign)
    Mr, rs = _frame(op, -left_sign)
    out = (Ml @ op.dense() @ Mr) * math.exp(ls + rs)
    return out


def hermitize(op: LindbladOperator) -> LindbladOperator:
    """Conjugate by ``exp(-chi Sx)`` (per cluster) and symmetrize."""
    if op.hermitized or op.chi == 0:
        return LindbladOperator(op.matrix, op.chi, True, op.meta, op.constant_included, dict(op.diagnostics))
    out = _conjugate(op, -1)
    asym = float(np.max(np.abs(out - out.T)))
    out = 0.5 * (out + out.T)
    if op.meta.clusters == 2:
        out = sps.csr_matrix(out)
    return LindbladOperator(out, op.chi, True, op.meta, op.constant_included,
                            dict(op.diagnostics, asymmetry=asym))


def dehermitize(op: LindbladOperator) -> LindbladOperator:
    """Inverse of :func:`hermitize`: conjugate by ``exp(+chi Sx)``."""
    if not op.hermitized or op.chi == 0:
        return LindbladOperator(op.matrix, op.chi, False, op.meta, op.constant_included, dict(op.diagnostics))
    out = _conjugate(op, +1)
    if op.meta.clusters == 2:
        out = sps.csr_matrix(out)
    return LindbladOperator(out, op.chi, False, op.meta, op.constant_included, dict(op.diagnostics))


def pseudo_hermiticity_residual(op: LindbladOperator) -> float:
    """``max|eta L^T - L eta|`` with ``eta ~ exp(2 chi Sx)`` scaled to unit max and
    ``L`` scaled to unit max."""
    if op.hermitized:
        raise ValueError("expects a non-Hermitized operator")
    N = op.meta.N
    eta, _ = rotation_matrix(N, 2 * op.chi, 1)
    if op.meta.clusters == 2:
        eta = np.kron(eta, eta)
    L = op.dense()
    top = np.max(np.abs(L))
    if top == 0:
        return 0.0
    L = L / top
    return float(np.max(np.abs(eta @ L.T - L @ eta)))


def inversion_commutator(op: LindbladOperator) -> float:
    N = op.meta.N
    R = inversion_operator(N)
    if op.meta.clusters == 2:
        R = np.kron(R, R)
    L = op.dense()
    return float(np.max(np.abs(L @ R - R @ L)))


def dump_matrix(op: LindbladOperator, fh) -> None:
    """Dense row-major text dump with 17 significant digits."""
    m = op.dense()
    fh.write(f"{m.shape[0]} {m.shape[1]}\n")
    for row in m:
        fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_matrix(fh) -> np.ndarray:
    r, c = (int(x) for x in fh.readline().split())
    data = np.array([float(x) for line in fh for x in line.split()])
    return data.reshape(r, c)


def subset_deviation(exact: LindbladOperator, approx: LindbladOperator) -> float:
    """Max-norm gap between two non-Hermitized builds, identity component removed.

    A multiple of the identity rescales every purity by the same factor and
    cancels from all entropies and gaps, so only the remainder is compared.
    The result is relative to the identity-free part of ``approx``.
    """
    a, b = exact.dense(), approx.dense()
    n = a.shape[0]
    D = a - b
    D = D - np.mean(np.diag(D)) * np.eye(n)
    ref = b - np.mean(np.diag(b)) * np.eye(n)
    return float(np.max(np.abs(D)) / np.max(np.abs(ref)))
