import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gammaln

from qpurity.dynamics import steady_state_entropy
from qpurity.lindblad import ModelSpec, build_model, measure, unitary, unitary_inter
from qpurity.rotor import (Phase, RotorPoint, alpha_critical, alpha_critical_numeric, alpha_critical_scan,
                           classical_value, d_critical, d_critical_numeric, effective_oscillator,
                           equator_phi0, equator_value, find_minima, landscape_grid,
                           lattice_scrambled_entropy, mipt_terms, page_curve_analytic,
                           second_derivative, two_cluster_boundary_alpha2, two_cluster_hessian,
                           two_cluster_phase, two_cluster_terms, two_cluster_value, u1_steady_entropy)
from qpurity.spin import INF


# ------------------------------------------------------------ classical values

def test_measure_q2_dinf_pole_and_equator():
    assert classical_value([measure(2)], RotorPoint(0.0, 0.0), INF) == pytest.approx(0.5, abs=1e-14)
    phis = np.linspace(-math.pi, math.pi, 17)
    assert np.allclose(equator_value([measure(2)], phis, INF), -0.5, atol=1e-14)


@pytest.mark.parametrize("d", [2, 3, 7])
def test_measure_q1_linear_in_x(d):
    phis = np.linspace(-math.pi, math.pi, 13)
    v = equator_value([measure(1)], phis, d)
    x = np.cos(phis)
    slope = np.polyfit(x, v, 1)
    assert np.max(np.abs(np.polyval(slope, x) - v)) < 1e-12
    assert slope[0] < 0
    rep = find_minima([measure(1)], d)
    assert rep.phase is Phase.PURIFIED and rep.degeneracy == 1
    assert rep.minima[0].xyz[0] == pytest.approx(1.0, abs=1e-9)


def test_unitary_inter_q1_classical_form():
    # table form -(1/2)[(1+z1)(1+z2) + (1-z1)(1-z2)], up to the origin constant
    rng = np.random.default_rng(3)
    z = rng.uniform(-1, 1, (20, 2))
    x = np.sqrt(1 - z ** 2)
    got = classical_value([unitary_inter(1)], ((x[:, 0], 0 * x[:, 0], z[:, 0]), (x[:, 1], 0 * x[:, 1], z[:, 1])),
                          INF, N=50)
    ref = -0.5 * ((1 + z[:, 0]) * (1 + z[:, 1]) + (1 - z[:, 0]) * (1 - z[:, 1]))
    diff = got - ref
    assert np.ptp(diff) < 1e-12


def test_pair_required_for_inter_terms():
    with pytest.raises(ValueError):
        classical_value([unitary_inter(1)], RotorPoint(1.0, 0.0), INF, N=10)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, math.pi - 0.01), st.floats(-math.pi, math.pi), st.sampled_from([2, 3, 5, INF]),
       st.sampled_from([measure(1), measure(2), measure(3), measure(4)]))
def test_landscape_inversion_symmetric(theta, phi, d, term):
    # subsystem inversion sends z -> -z, i.e. phi -> -phi
    a = classical_value([term], RotorPoint(theta, phi), d)
    b = classical_value([term], RotorPoint(theta, -phi), d)
    assert a == pytest.approx(b, abs=1e-12)


# ------------------------------------------------------------ phase detection

def test_phase_q3_d4_scrambled():
    rep = find_minima([measure(3)], 4)
    assert rep.phase is Phase.SCRAMBLED
    assert rep.degeneracy == 2
    phis = sorted(m.phi for m in rep.minima)
    assert phis[0] == pytest.approx(-phis[1], abs=1e-6)
    assert abs(phis[1]) > 1e-3


def test_phase_q3_d2_purified():
    rep = find_minima([measure(3)], 2)
    assert rep.phase is Phase.PURIFIED and rep.degeneracy == 1


def test_phase_q3_d3_critical():
    assert find_minima([measure(3)], 3).phase is Phase.CRITICAL


# ------------------------------------------------------------ closed forms

@pytest.mark.parametrize("q,d,ac", [(2, INF, 2.0), (2, 2, 1.0), (1, 2, 0.0), (1, 9, 0.0), (1, INF, 0.0)])
def test_alpha_critical_values(q, d, ac):
    assert alpha_critical(q, d) == pytest.approx(ac, abs=1e-15)


@pytest.mark.parametrize("q", [2, 3, 4])
@pytest.mark.parametrize("d", [2, 3, 5])
def test_alpha_critical_numeric_matches(q, d):
    assert alpha_critical_numeric(q, d) == pytest.approx(alpha_critical(q, d), abs=1e-6)


@pytest.mark.parametrize("qp,dc", [(3, 3.0), (4, 2.0), (5, 5 / 3), (6, 1.5), (2, INF), (1, None)])
def test_d_critical_values(qp, dc):
    assert d_critical(qp) == dc


@pytest.mark.parametrize("qp", [3, 4, 5, 6])
def test_d_critical_numeric(qp):
    assert d_critical_numeric(qp) == pytest.approx(qp / (qp - 2), abs=1e-6)


def test_effective_oscillator_examples():
    assert effective_oscillator(3, 3).potential == 0.0
    assert effective_oscillator(1, 7).kinetic == 0.0
    o = effective_oscillator(2, 5)
    assert (o.kinetic, o.potential) == (4.0, 2.0)


@pytest.mark.parametrize("qp,d", [(3, 2.0), (3, 4.0), (4, 3.0), (5, 1.5)])
def test_oscillator_potential_sign_matches_landscape(qp, d):
    if d < 2:
        pytest.skip("rotor builder needs d >= 2")
    f2 = second_derivative(lambda p: float(equator_value([measure(qp)], p, d)), h=1e-2)
    pot = effective_oscillator(qp, d).potential
    assert np.sign(f2) == np.sign(pot)


# ------------------------------------------------------------ page curves

@settings(max_examples=30)
@given(st.integers(2, 400), st.floats(2.0, 50.0))
def test_page_unitary_symmetric_and_zero_end(N, d):
    n = np.arange(N + 1)
    S = page_curve_analytic(N, n, "UnitaryOnly", d)
    assert S[0] == 0
    assert np.allclose(S, S[::-1], atol=1e-9 * max(1, np.max(S)))


@pytest.mark.parametrize("N,d", [(10, 2.0), (40, 3.0), (200, 20.0)])
def test_page_half_value(N, d):
    S = page_curve_analytic(N, np.array([N // 2]), "UnitaryOnly", d)[0]
    ref = N / 2 * math.log(d) - math.log(2) + math.log1p(d ** -N)
    assert S == pytest.approx(ref, rel=1e-12)


def test_page_large_d_symmetric():
    S = page_curve_analytic(100, np.arange(101), "LargeD", INF, 1.0)
    assert S[0] == 0 and np.allclose(S, S[::-1], atol=1e-9)


# ------------------------------------------------------------ U(1)

def _u1_recursion(N):
    """Null vector of the (S^y)^2 operator in the P basis, solved directly."""
    from qpurity.spin import build_spin_ops, normalization_map
    r = build_spin_ops(N)
    Sy2 = -(r.iSy @ r.iSy)
    w, v = np.linalg.eigh(Sy2)
    # ground space is two-dimensional (parity sectors); project the product state on it
    P0 = np.exp(normalization_map(N).logEntries)
    G = v[:, np.abs(w - w[0]) < 1e-9]
    y = G @ (G.T @ P0)
    P = y / np.exp(normalization_map(N).logEntries)
    with np.errstate(divide="ignore"):
        return -np.log(np.abs(P) / abs(P[0]))


def test_u1_basic():
    S = u1_steady_entropy(10, np.arange(11))
    assert S[0] == 0
    assert np.all(np.isinf(S[1::2]))
    assert np.all(np.isfinite(S[0::2]))


def test_u1_N4_n2_is_log3():
    # independent oracle: ground space of (S^y)^2 at N = 4 gives log 3
    assert u1_steady_entropy(4, 2) == pytest.approx(math.log(3), abs=1e-14)
    assert _u1_recursion(4)[2] == pytest.approx(math.log(3), abs=1e-12)


@pytest.mark.parametrize("N", [6, 12, 30])
def test_u1_matches_null_vector(N):
    S = u1_steady_entropy(N, np.arange(N + 1))
    ref = _u1_recursion(N)
    even = np.arange(0, N + 1, 2)
    assert np.allclose(S[even], ref[even], atol=1e-10)


def test_u1_odd_N_rejected():
    with pytest.raises(NotImplementedError):
        u1_steady_entropy(7, 2)


def test_u1_against_gamma_expression():
    N, n = 20, 6
    lg = gammaln
    half_binom = 0.5 * (lg(N + 1) - lg(n + 1) - lg(N - n + 1))
    ratio = (lg(N / 2 + 1) + lg((N - n + 1) / 2) + lg((n + 1) / 2)
             - lg(N / 2 + 0.5) - lg(0.5) - lg((N - n) / 2 + 1) - lg(n / 2 + 1))
    assert u1_steady_entropy(N, n) == pytest.approx(half_binom - 0.5 * ratio, abs=1e-12)


# ------------------------------------------------------------ lattice

@pytest.mark.parametrize("N,d,V", [(4, 2, 6), (10, 3, 4), (50, 5, 8)])
def test_lattice_scrambled_ends_and_cusp(N, d, V):
    S = lattice_scrambled_entropy(N, d, V, np.arange(V + 1))
    assert abs(S[0]) < 1e-12 and abs(S[-1]) < 1e-12
    half = S[V // 2]
    assert half == pytest.approx(N * V / 2 * math.log(d) - math.log(2), rel=1e-3)
    assert np.argmax(S) == V // 2


# ------------------------------------------------------------ two clusters

def test_two_cluster_closed_form_matches_terms():
    for d in (2.0, 3.0, 10.0):
        ts = two_cluster_terms(0.3, 0.7, 1.2, d)
        ph = np.linspace(-2, 2, 9)
        pts = ((np.cos(ph), 0 * ph, np.sin(ph)), (np.cos(ph[::-1]), 0 * ph, np.sin(ph[::-1])))
        a = classical_value(ts, pts, d)
        b = two_cluster_value(0.3, 0.7, 1.2, d, ph, ph[::-1])
        assert np.ptp(a - b) < 1e-10


def test_two_cluster_beta0_threshold_half():
    for d in (2.0,):
        assert two_cluster_boundary_alpha2(1e9, 0.0, d) == pytest.approx(0.5, abs=1e-6)
        assert two_cluster_phase(0.49, 0.49, 0.0, d).phase is Phase.SCRAMBLED
        assert two_cluster_phase(0.51, 0.51, 0.0, d).phase is Phase.PURIFIED


@pytest.mark.parametrize("beta", [0.3, 1.0, 1.7])
def test_two_cluster_intermediate_beta(beta):
    assert two_cluster_phase(100.0, 0.0, beta, 2.0).phase is Phase.SCRAMBLED
    assert two_cluster_boundary_alpha2(1e9, beta, 2.0) == pytest.approx((2 - beta) / 4, abs=1e-6)


def test_two_cluster_strong_beta():
    beta = 3.0
    a1c = (2 * beta - 1) * (beta + 1) / (beta - 2)
    assert a1c == 20.0
    assert two_cluster_phase(a1c + 0.5, 0.0, beta, 2.0).phase is Phase.PURIFIED
    assert two_cluster_phase(a1c - 0.5, 0.0, beta, 2.0).phase is Phase.SCRAMBLED


def test_two_cluster_hessian_symmetric():
    H = two_cluster_hessian(0.4, 1.3, 0.8, 3.0)
    assert np.allclose(H, H.T)


# ------------------------------------------------------------ scans

def test_alpha_scan_dinf():
    assert alpha_critical_scan(2, INF) == pytest.approx(2.0, abs=1e-6)


def test_equator_phi0_mipt():
    assert equator_phi0(mipt_terms(2, 1.0), INF, 200) == pytest.approx(math.pi / 3, abs=2e-3)
    assert equator_phi0(mipt_terms(2, 3.0), INF, 200) < 1e-4


def test_landscape_grid_shape():
    th, ph, V = landscape_grid([measure(3)], 4, None, 11, 21)
    assert V.shape == (11, 21) and np.all(np.isfinite(V))


def test_rotor_minimum_agrees_with_quantum_degeneracy():
    # scrambled landscape <-> doubly degenerate Lindbladian ground state
    op = build_model(ModelSpec(120, 4, (measure(3),)))
    assert steady_state_entropy(op).info["degeneracy"] == 2
    op = build_model(ModelSpec(120, 2, (measure(3),)))
    assert steady_state_entropy(op).info["degeneracy"] == 1
