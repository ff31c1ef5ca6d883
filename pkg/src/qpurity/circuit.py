"""Brute-force trajectory oracle and Haar-average identities.

Trajectories evolve an unnormalized pure state of ``N`` qudits under a
Brownian Hamiltonian (exact exponential per step) and rate-driven Haar
projections.  Averages of ``tr sigma_A^2`` are compared with the exact-subset
Lindbladian.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, permutations, product

import numpy as np
from scipy.linalg import expm

from .lindblad import LindbladOperator, ResourceLimitError, TermSpec, build_exact_subset
from .spin import normalization_map

MAX_OPS_BYTES = 256 * 2 ** 20


def gell_mann_basis(d: int) -> np.ndarray:
    """``d*d`` Hermitian matrices with ``tr(Ta Tb) = d delta_ab``; the first is the identity."""
    mats = [np.eye(d, dtype=complex)]
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1
            a = np.zeros((d, d), dtype=complex)
            a[j, k], a[k, j] = -1j, 1j
            mats += [s, a]
    for l in range(1, d):
        g = np.zeros((d, d), dtype=complex)
        g[np.arange(l), np.arange(l)] = 1
        g[l, l] = -l
        mats.append(g * math.sqrt(2 / (l * (l + 1))))
    out = np.array(mats)
    out[1:] *= math.sqrt(d / 2)
    return out


@dataclass(frozen=True)
class TrajectoryConfig:
    N: int
    d: int
    terms: tuple
    dt: float
    tMax: float
    trajectories: int = 20000
    masterSeed: int = 0
    chunk: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not 1 <= self.N <= 8:
            raise ValueError("oracle supports 1 <= N <= 8")
        if self.d not in (2, 3):
            raise ValueError("oracle supports d in {2, 3}")
        if self.trajectories < 100:
            raise ValueError("need at least 100 trajectories")
        for t in self.terms:
            if t.inter:
                raise ValueError("oracle handles single-cluster terms only")
            if t.q > self.N:
                raise ValueError("term acts on more qudits than available")
        if not self.dt > 0 or not self.tMax >= 0:
            raise ValueError("dt must be positive and tMax non-negative")
        bound = 0.01 / max(self.norm_estimate(), 1e-300)
        if self.dt > bound * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds stability bound {bound:.3g}")

    def norm_estimate(self) -> float:
        """Spectral radius of the exact averaged generator."""
        if not self.terms:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(exact_generator(self)))))

    @staticmethod
    def stable_dt(N, d, terms, safety=1.0) -> float:
        K = exact_generator_terms(N, d, terms)
        return 0.01 * safety / float(np.max(np.abs(np.linalg.eigvals(K))))

    def to_dict(self):
        return {"N": self.N, "d": self.d, "terms": [t.to_dict() for t in self.terms],
                "dt": self.dt, "tMax": self.tMax, "trajectories": self.trajectories,
                "masterSeed": self.masterSeed, "chunk": self.chunk}


@dataclass
class MCEstimate:
    times: np.ndarray
    cuts: list
    mean: np.ndarray        # (times, cuts)
    stderr: np.ndarray
    trajectories: int
    seed: int
    info: dict = field(default_factory=dict)

    def to_dict(self, config=None):
        return {"config": config, "times": self.times.tolist(), "cuts": [list(c) for c in self.cuts],
                "mean": self.mean.tolist(), "stderr": self.stderr.tolist(),
                "trajectories": self.trajectories, "seed": self.seed}


# ------------------------------------------------------------ exact reference

def exact_generator_terms(N, d, terms) -> np.ndarray:
    """``K`` with ``dP/dt = -K P`` on subset-size purities, from explicit subset sums."""
    Lt = sum(build_exact_subset(N, d, t).dense() for t in terms)
    logN = normalization_map(N).logEntries
    return Lt * np.exp(logN[None, :] - logN[:, None])


def exact_generator(cfg: TrajectoryConfig) -> np.ndarray:
    return exact_generator_terms(cfg.N, cfg.d, cfg.terms)


def exact_reference(cfg: TrajectoryConfig, times) -> np.ndarray:
    """Exact ``P_n(t)`` for a product initial state, shape ``(times, N+1)``."""
    K = exact_generator(cfg)
    P0 = np.ones(cfg.N + 1)
    return np.array([expm(-K * t) @ P0 for t in times])


# ------------------------------------------------------------ trajectories

def _embed_local(local, sites, N, d):
    # operator on the given sites (in order) tensored with identity elsewhere
    q = len(sites)
    D = d ** N
    T = local.reshape((d,) * (2 * q))
    rest = [i for i in range(N) if i not in sites]
    eye = np.eye(d ** len(rest)).reshape((d,) * (2 * len(rest))) if rest else np.ones(())
    out = np.tensordot(T, eye, axes=0)  # axes: out_sites, in_sites, out_rest, in_rest
    order_out = list(sites) + rest
    perm = [0] * (2 * N)
    nr = len(rest)
    src_out = list(range(q)) + list(range(2 * q, 2 * q + nr))
    src_in = list(range(q, 2 * q)) + list(range(2 * q + nr, 2 * q + 2 * nr))
    for k, site in enumerate(order_out):
        perm[site] = src_out[k]
        perm[N + site] = src_in[k]
    full = np.transpose(out, perm)
    return full.reshape(D, D)


def _unitary_ops(cfg: TrajectoryConfig):
    T = gell_mann_basis(cfg.d)
    ops, var = [], []
    for t in cfg.terms:
        if not t.unitary:
            continue
        J = t.raw_strength(cfg.N, cfg.d)
        n_ops = math.comb(cfg.N, t.q) * cfg.d ** (2 * t.q)
        if n_ops * (cfg.d ** cfg.N) ** 2 * 16 > MAX_OPS_BYTES:
            raise ResourceLimitError("Brownian operator table too large for this oracle")
        for sites in combinations(range(cfg.N), t.q):
            for a in product(range(cfg.d ** 2), repeat=t.q):
                loc = T[a[0]]
                for k in a[1:]:
                    loc = np.kron(loc, T[k])
                ops.append(_embed_local(loc, sites, cfg.N, cfg.d))
                var.append(J)
    if not ops:
        return None, None
    return np.array(ops), np.array(var)


def _measure_sets(cfg: TrajectoryConfig):
    out = []
    for t in cfg.terms:
        if t.unitary:
            continue
        lam = t.raw_strength(cfg.N, cfg.d)
        for sites in combinations(range(cfg.N), t.q):
            out.append((sites, lam))
    return out


def _project(psi, sites, phi, N, d):
    # psi: (B, d, ..., d); phi: (B, d**q) normalized
    q = len(sites)
    B = psi.shape[0]
    src = [1 + s for s in sites]
    moved = np.moveaxis(psi, src, list(range(1, q + 1)))
    shp = moved.shape
    M = moved.reshape(B, d ** q, -1)
    amp = np.einsum("bk,bkr->br", phi.conj(), M)
    new = (phi[:, :, None] * amp[:, None, :]).reshape(shp)
    return np.moveaxis(new, list(range(1, q + 1)), src)


def _haar_states(rng, B, D):
    z = rng.standard_normal((B, D)) + 1j * rng.standard_normal((B, D))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _purity(psi, cut, N, d):
    B = psi.shape[0]
    k = len(cut)
    moved = np.moveaxis(psi, [1 + s for s in cut], list(range(1, k + 1)))
    M = moved.reshape(B, d ** k, -1)
    if M.shape[1] > M.shape[2]:
        G = np.einsum("bki,bkj->bij", M.conj(), M)
    else:
        G = np.einsum("bik,bjk->bij", M, M.conj())
    return np.sum(np.abs(G) ** 2, axis=(1, 2))


def _step_indices(cfg, times):
    idx = []
    for t in times:
        k = int(round(t / cfg.dt))
        if abs(k * cfg.dt - t) > 1e-9 * max(1.0, t) or t > cfg.tMax + 1e-12:
            raise ValueError(f"time {t} is not a multiple of dt within tMax")
        idx.append(k)
    return idx


def _run_batch(cfg, B, rng, ops, var, msets, record_steps, cuts=None, keep_states=False):
    N, d = cfg.N, cfg.d
    D = d ** N
    psi = np.zeros((B, D), dtype=complex)
    psi[:, 0] = 1.0  # product state |0...0>
    nsteps = max(record_steps) if record_steps else 0
    want = {}
    for j, k in enumerate(record_steps):
        want.setdefault(k, []).append(j)
    out_p = np.zeros((len(record_steps), len(cuts) if cuts else 0, B))
    states = [None] * len(record_steps)

    def record(step):
        for j in want.get(step, []):
            if cuts:
                t = psi.reshape((B,) + (d,) * N)
                for c, cut in enumerate(cuts):
                    out_p[j, c] = _purity(t, cut, N, d)
            if keep_states:
                states[j] = psi.copy()

    record(0)
    sd = np.sqrt(var * cfg.dt) if ops is not None else None
    flat = ops.reshape(len(var), D * D) if ops is not None else None
    for step in range(1, nsteps + 1):
        if ops is not None:
            W = rng.standard_normal((B, len(var))) * sd
            Hdt = (W @ flat).reshape(B, D, D)
            psi = _expm_apply(Hdt, psi)
        if msets:
            t = psi.reshape((B,) + (d,) * N)
            for sites, lam in msets:
                hit = rng.random(B) < lam * cfg.dt
                nh = int(hit.sum())
                if nh:
                    phi = _haar_states(rng, nh, d ** len(sites))
                    t[hit] = _project(t[hit], sites, phi, N, d)
            psi = t.reshape(B, D)
        record(step)
    return out_p, states


def _expm_apply(Hdt, psi, tol=1e-17, max_terms=60):
    """``exp(-i Hdt) psi`` per batch entry by a Taylor series summed to round-off.

    Each step's ``Hdt`` has a small norm, so the series converges in a few
    terms; scaling by ``2**s`` keeps it contractive when it does not.
    """
    nrm = float(np.max(np.abs(Hdt).sum(axis=2)))
    s = max(0, int(math.ceil(math.log2(nrm / 0.5)))) if nrm > 0.5 else 0
    A = Hdt * (-1j / 2 ** s)
    for _ in range(2 ** s):
        term = psi
        out = psi.copy()
        for k in range(1, max_terms):
            term = np.einsum("bij,bj->bi", A, term) / k
            out += term
            if np.max(np.abs(term)) <= tol * np.max(np.abs(out)):
                break
        psi = out
    return psi


def _chunk_rng(master, chunk):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master) & (2 ** 64 - 1), int(chunk)])))


def simulate_trajectory(cfg: TrajectoryConfig, seed: int, times=None) -> np.ndarray:
    """Unnormalized state vectors of one trajectory at ``times`` (default ``[0, tMax]``)."""
    times = [0.0, cfg.tMax] if times is None else list(times)
    steps = _step_indices(cfg, times)
    ops, var = _unitary_ops(cfg)
    rng = _chunk_rng(cfg.masterSeed, seed)
    _, states = _run_batch(cfg, 1, rng, ops, var, _measure_sets(cfg), steps, keep_states=True)
    return np.array([s[0] for s in states])


def prefix_cuts(N: int):
    return [tuple(range(n)) for n in range(N + 1)]


def averaged_purity(cfg: TrajectoryConfig, cuts=None, times=None, workers: int = 1) -> MCEstimate:
    """Trajectory average of ``tr sigma_A^2`` with standard errors.

    Chunks of ``cfg.chunk`` trajectories use independent Philox streams keyed
    by ``(masterSeed, chunk index)`` and are reduced in chunk order, so the
    result does not depend on ``workers``.
    """
    cuts = prefix_cuts(cfg.N) if cuts is None else [tuple(c) for c in cuts]
    times = [cfg.tMax] if times is None else list(times)
    steps = _step_indices(cfg, times)
    ops, var = _unitary_ops(cfg)
    msets = _measure_sets(cfg)
    sizes = []
    left = cfg.trajectories
    while left > 0:
        sizes.append(min(cfg.chunk, left))
        left -= sizes[-1]

    def job(c):
        p, _ = _run_batch(cfg, sizes[c], _chunk_rng(cfg.masterSeed, c), ops, var, msets, steps, cuts)
        return p.sum(axis=2), (p ** 2).sum(axis=2)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(job, range(len(sizes))))
    else:
        parts = [job(c) for c in range(len(sizes))]
    s1 = np.zeros((len(times), len(cuts)))
    s2 = np.zeros_like(s1)
    for a, b in parts:
        s1 += a
        s2 += b
    n = cfg.trajectories
    mean = s1 / n
    var_s = np.maximum(s2 / n - mean ** 2, 0.0) * n / (n - 1)
    return MCEstimate(np.array(times, dtype=float), cuts, mean, np.sqrt(var_s / n), n, cfg.masterSeed,
                      {"chunks": len(sizes)})


# ------------------------------------------------------------ Haar identities

def haar_M_check(D: int, samples: int = 100000, seed: int = 0):
    """Monte Carlo estimate of the projected Haar-measurement block.

    The samples are split into four disjoint blocks, one per entry, and each
    entry averages ``|phi_a|^2 |phi_b|^2`` over all ordered pairs ``a != b``;
    the exact value is ``1/(D(D+1))``.  Returns ``(estimate, stderr)``.
    """
    if D < 2:
        raise ValueError("D must be >= 2")
    rng = _chunk_rng(seed, 0)
    phi = _haar_states(rng, samples, D)
    p = np.abs(phi) ** 2
    s1 = p.sum(axis=1)
    # mean over ordered pairs a != b of p_a p_b
    x = (s1 ** 2 - np.sum(p ** 2, axis=1)) / (D * (D - 1))
    est = np.zeros((2, 2))
    err = np.zeros((2, 2))
    for k, blk in enumerate(np.array_split(x, 4)):
        est[k // 2, k % 2] = blk.mean()
        err[k // 2, k % 2] = blk.std(ddof=1) / math.sqrt(len(blk))
    return est, err


def _replica_vectors(D):
    Ip = np.zeros((D,) * 4)
    Im = np.zeros((D,) * 4)
    for a in range(D):
        for b in range(D):
            Ip[a, a, b, b] = 1
            Im[a, b, b, a] = 1
    return Ip.reshape(-1), Im.reshape(-1)


def permutation_operator(perm, D):
    """Operator on ``(C^D)^{x4}`` mapping factor ``k`` to slot ``perm[k]``."""
    n = len(perm)
    eye = np.eye(D ** n).reshape((D,) * n + (D ** n,))
    inv = np.argsort(perm)
    return np.transpose(eye, list(inv) + [n]).reshape(D ** n, D ** n)


def permutation_sum_check(D: int, return_parts: bool = False):
    """Exact projected block from the equal-weight permutation sum.

    ``E[(|phi><phi|)^{x4}] = Wg0 * sum_sigma P_sigma``; a partial transpose on
    replicas 2 and 4 turns it into the four-replica average, whose action on
    ``(I+|, (I-|`` is solved through the Gram matrix of those vectors.
    """
    if D < 2:
        raise ValueError("D must be >= 2")
    wg0 = 1.0 / (D ** 4 + 6 * D ** 3 + 11 * D ** 2 + 6 * D)
    Ip, Im = _replica_vectors(D)
    basis = np.array([Ip, Im])
    total = np.zeros((D ** 4, D ** 4))
    parts = []
    for perm in permutations(range(4)):
        P = permutation_operator(perm, D).reshape((D,) * 8)
        # partial transpose on replicas 2 and 4 (indices 1, 3 and 5, 7)
        P = np.transpose(P, (0, 5, 2, 7, 4, 1, 6, 3)).reshape(D ** 4, D ** 4)
        parts.append(basis @ P @ basis.T)
        total += P
    C = basis @ (wg0 * total) @ basis.T
    eta = basis @ basis.T
    M = C @ np.linalg.inv(eta)
    if return_parts:
        return M, [p for p in parts], wg0
    return M
