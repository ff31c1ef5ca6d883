"""End-to-end acceptance checks, one test per criterion, each printing a PASS/FAIL line."""
import math
import os
import time

import numpy as np
import pytest
from scipy.optimize import brentq

from qpurity.circuit import TrajectoryConfig, averaged_purity, exact_reference, haar_M_check, permutation_sum_check
from qpurity.dynamics import gap_scaling_fit, steady_state_entropy
from qpurity.lattice import (ChainSpec, build_chain_lindblad, cft_fit, chain_ground_state, chain_steady_entropy,
                             marshall_min, staggered_sector, two_cluster_quantum_diagram)
from qpurity.lindblad import (ModelSpec, build_exact_subset, build_model, inversion_commutator, measure,
                              subset_deviation, unitary)
from qpurity.rotor import (alpha_critical, alpha_critical_numeric, alpha_critical_scan, d_critical,
                           d_critical_numeric, equator_phi0, page_curve_analytic, two_cluster_boundary_alpha2,
                           two_cluster_hessian, u1_steady_entropy)
from qpurity.spin import INF

pytestmark = pytest.mark.slow


def _op(N, d, *terms, hermitized=True):
    return build_model(ModelSpec(N, d, tuple(terms)), hermitized=hermitized)


def test_01_scrambling_bound(report):
    t0 = time.perf_counter()
    err = max(abs(d_critical_numeric(qp) - qp / (qp - 2)) for qp in (3, 4, 5, 6))
    closed = all(d_critical(qp) == qp / (qp - 2) for qp in (3, 4, 5, 6))
    dt = time.perf_counter() - t0
    ok = err <= 1e-6 and closed and dt < 1.0
    report(1, ok, f"max |d_c - q'/(q'-2)| = {err:.2e}, runtime {dt:.3f} s")
    assert ok


def test_02_mipt_threshold(report):
    a_inf = alpha_critical_scan(2, INF)
    grid = [(q, d) for q in (2, 3, 4) for d in (2, 3, 5)]
    err = max(abs(alpha_critical_numeric(q, d) - alpha_critical(q, d)) for q, d in grid)
    ok = abs(a_inf - 2) <= 1e-6 and err <= 1e-6
    report(2, ok, f"alpha_c(2, inf) = {a_inf:.9f}; closed vs numeric max err {err:.2e}")
    assert ok


def test_03_critical_gap_scaling(report):
    Ns = [100, 200, 400, 800]
    t0 = time.perf_counter()
    s_crit, *_ = gap_scaling_fit(lambda N: _op(N, 3, measure(3)), Ns)
    s_u1, *_ = gap_scaling_fit(lambda N: _op(N, INF, measure(2)), Ns)
    *_, g_pur = gap_scaling_fit(lambda N: _op(N, 2, measure(3)), Ns)
    dt = time.perf_counter() - t0
    var = (max(g_pur) - min(g_pur)) / min(g_pur)
    ok = abs(s_crit + 1) <= 0.05 and abs(s_u1 + 1) <= 0.05 and var < 0.05 and dt < 120
    report(3, ok, f"exponent (q'=3,d=3) {s_crit:.4f}, (q'=2,d=inf) {s_u1:.4f}; "
                  f"purified gap variation {var:.2%}; runtime {dt:.1f} s")
    assert ok


def test_04_page_curve(report):
    N = 200
    c = steady_state_entropy(_op(N, 20, unitary(2)))
    an = page_curve_analytic(N, c.n, "UnitaryOnly", 20)
    rel_u = float(np.max(np.abs(c.S2[1:-1] - an[1:-1]) / an[1:-1]))
    rel_l = {}
    for alpha in (0.5, 1.0, 1.5):
        terms = (unitary(2), measure(1, alpha=alpha))
        cl = steady_state_entropy(_op(N, INF, *terms))
        phi0 = equator_phi0(terms, INF)
        al = page_curve_analytic(N, cl.n, "LargeD", INF, phi0)
        rel_l[alpha] = float(np.max(np.abs(cl.S2[1:-1] - al[1:-1]) / al[1:-1]))
    worst = max(rel_l.values())
    ok = rel_u <= 0.05 and worst <= 0.02
    report(4, ok, f"unitary-only d=20 max rel err {rel_u:.2%}; large-d (alpha<2) max rel err "
                  + ", ".join(f"a={a}: {r:.1%}" for a, r in rel_l.items()))
    assert ok


def test_05_u1_entropy(report):
    N = 100
    c = steady_state_entropy(_op(N, INF, measure(2)))
    an = u1_steady_entropy(N, c.n)
    even = c.n % 2 == 0
    err = float(np.max(np.abs(c.S2[even] - an[even])))
    odd_inf = bool(np.all(np.isposinf(c.S2[~even])))
    ok = err <= 1e-8 and odd_inf
    report(5, ok, f"even-n max |dS| = {err:.2e}; odd n all +inf: {odd_inf}")
    assert ok


def test_06_oracle_equivalence(report):
    err = 0.0
    for N in range(2, 13):
        for term in (measure(1), unitary(1)):
            for d in (2, 3):
                ex = build_exact_subset(N, d, term).dense()
                ln = _op(N, d, term, hermitized=False).dense()
                err = max(err, float(np.max(np.abs(ex - ln)) / max(1.0, np.max(np.abs(ln)))))
    Ns = list(range(6, 13))
    dev = [subset_deviation(build_exact_subset(N, 2, measure(2)), _op(N, 2, measure(2), hermitized=False))
           for N in Ns]
    mono = bool(np.all(np.diff(dev) < 0))
    ok = err <= 1e-10 and mono
    report(6, ok, f"single-body max rel diff {err:.2e}; q'=2 deviation "
                  + " > ".join(f"{x:.4f}" for x in dev) + f" monotone: {mono}")
    assert ok


def test_07_circuit_monte_carlo(report):
    terms = (unitary(2), measure(1))
    dt0 = TrajectoryConfig.stable_dt(3, 2, terms)
    dt = 0.1 / math.ceil(0.1 / dt0)
    cfg = TrajectoryConfig(3, 2, terms, dt, 1.0, 20000, 2024)
    times = [0.2, 0.5, 1.0]
    t0 = time.perf_counter()
    est = averaged_purity(cfg, times=times, workers=int(os.environ.get("QPURITY_THREADS", os.cpu_count() or 1)))
    wall = time.perf_counter() - t0
    ref = exact_reference(cfg, times)
    se = est.stderr
    diff = np.abs(est.mean - ref)
    live = se > 0
    zmax = float(np.max(diff[live] / se[live]))
    dead_ok = bool(np.all(diff[~live] <= 1e-12))
    ok = zmax <= 3 and dead_ok and wall < 300
    report(7, ok, f"max |z| = {zmax:.2f} over {int(live.sum())} entries; runtime {wall:.0f} s")
    assert ok


def test_08_weingarten(report):
    exact = max(float(np.max(np.abs(permutation_sum_check(D) - 1 / (D * (D + 1))))) for D in (2, 3, 4, 5))
    z = 0.0
    for D in (2, 3, 4):
        est, err = haar_M_check(D, 100000, seed=D)
        z = max(z, float(np.max(np.abs(est - 1 / (D * (D + 1))) / err)))
    ok = exact <= 1e-12 and z <= 3
    report(8, ok, f"permutation sum max err {exact:.1e}; Haar MC max |z| {z:.2f}")
    assert ok


def _random_specs(n, seed=9):
    rng = np.random.default_rng(seed)
    pool = [unitary(1), unitary(2), unitary(3), measure(1), measure(2), measure(3), measure(4)]
    specs = []
    while len(specs) < n:
        N = int(rng.integers(4, 33))
        d = int(rng.choice([2, 3, 4, 5, 7]))
        k = int(rng.integers(1, 4))
        picks = [pool[i] for i in rng.choice(len(pool), k, replace=False)]
        if rng.random() < 0.3:
            picks.append(measure(1, alpha=float(rng.uniform(0.1, 3.0))))
        specs.append(ModelSpec(N, d, tuple(picks)))
    return specs


def test_09_pseudo_hermiticity(report):
    im = match = comm = 0.0
    for spec in _random_specs(20):
        op = build_model(spec, hermitized=False)
        ev = np.linalg.eigvals(op.dense())
        scale = max(1.0, float(np.max(np.abs(ev))))
        h = build_model(spec)
        im = max(im, float(np.max(np.abs(ev.imag))) / scale)
        match = max(match, float(np.max(np.abs(np.sort(ev.real) - np.linalg.eigvalsh(h.dense())))) / scale)
        comm = max(comm, inversion_commutator(h) / max(1.0, float(np.max(np.abs(h.dense())))))
    ok = im <= 1e-9 and match <= 1e-9 and comm <= 1e-10
    report(9, ok, f"20 specs: max |Im|/scale {im:.1e}, spectrum match {match:.1e}, inversion {comm:.1e}")
    assert ok


def test_10_chain_cft(report):
    t0 = time.perf_counter()
    out = {}
    odd = 0.0
    marshall = True
    for bc in ("PBC", "OBC"):
        spec = ChainSpec(14, bc=bc)
        gs = chain_ground_state(build_chain_lindblad(spec), sector=staggered_sector(spec))
        curve = chain_steady_entropy(spec, gs)
        out[bc] = cft_fit(curve, 14, bc)[0]
        P = np.array(curve.info["purity"])
        odd = max(odd, float(np.max(np.abs(P[curve.n % 2 == 1]))))
        marshall &= marshall_min(gs) > 0
    dt = time.perf_counter() - t0
    ok = 0.4 <= out["PBC"] <= 0.6 and 0.17 <= out["OBC"] <= 0.33 and odd <= 1e-12 and marshall and dt < 180
    report(10, ok, f"c_PBC = {out['PBC']:.4f}, c_OBC = {out['OBC']:.4f}; odd-l max |P| {odd:.1e}; "
                   f"Marshall {marshall}; runtime {dt:.1f} s")
    assert ok


def _min_eig(a1, a2, beta, d=2.0):
    return np.linalg.eigvalsh(two_cluster_hessian(a1, a2, beta, d))[0]


def test_11_two_cluster_diagram(report):
    errs = []
    a0 = brentq(lambda a: _min_eig(a, a, 0.0), 1e-6, 10, xtol=1e-14)
    errs.append(abs(a0 - 0.5))
    for beta in (0.5, 1.0, 1.5):
        errs.append(abs(two_cluster_boundary_alpha2(1e9, beta, 2.0) - (2 - beta) / 4))
    for beta in (2.5, 3.0, 4.0):
        a1 = brentq(lambda a: _min_eig(a, 0.0, beta), 1e-6, 1e3, xtol=1e-14)
        errs.append(abs(a1 - (2 * beta - 1) * (beta + 1) / (beta - 2)))
    thr = max(errs)
    dis = {}
    for beta in (0.0, 1.0, 3.0):
        dis[beta] = two_cluster_quantum_diagram(beta, d=2, N=60, ngrid=50).disagreement(True)
    ok = thr <= 1e-3 and max(dis.values()) < 0.03
    report(11, ok, f"classical thresholds max err {thr:.1e}; quantum N=60 interior disagreement "
                   + ", ".join(f"beta={b:g}: {v:.2%}" for b, v in dis.items()))
    assert ok
