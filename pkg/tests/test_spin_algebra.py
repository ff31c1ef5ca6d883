import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.linalg import expm

from qpurity.spin import (INF, ScaledVector, apply_imaginary_rotation, build_spin_ops, chi_of,
                          coherent_state, inversion_operator, normalization_map, rotation_matrix)


@pytest.mark.parametrize("N", [1, 2, 3, 7, 20])
def test_commutators_cyclic(N):
    r = build_spin_ops(N)
    Sx, iSy, Sz = r.Sx, r.iSy, r.Sz
    # [Sx, iSy] = -Sz, [iSy, Sz] = -Sx, [Sz, Sx] = iSy (real antisymmetric representation)
    assert np.max(np.abs(Sx @ iSy - iSy @ Sx + Sz)) <= 1e-12
    assert np.max(np.abs(iSy @ Sz - Sz @ iSy + Sx)) <= 1e-12
    assert np.max(np.abs(Sz @ Sx - Sx @ Sz - iSy)) <= 1e-12


@pytest.mark.parametrize("N", [1, 4, 11, 50])
def test_casimir(N):
    r = build_spin_ops(N)
    S = N / 2
    C = r.Sx @ r.Sx + r.iSy @ (-r.iSy) + r.Sz @ r.Sz
    assert np.max(np.abs(C - S * (S + 1) * np.eye(N + 1))) <= 1e-10


def test_sz_small_cases():
    assert np.allclose(build_spin_ops(1).Sz, np.diag([0.5, -0.5]), atol=0)
    assert np.allclose(build_spin_ops(2).Sz, np.diag([1.0, 0.0, -1.0]), atol=0)
    r = build_spin_ops(9)
    assert np.array_equal(np.diag(r.Sz), 4.5 - np.arange(10))


def test_isy_real_antisymmetric():
    r = build_spin_ops(6)
    assert r.iSy.dtype.kind == "f"
    assert np.array_equal(r.iSy, -r.iSy.T)


@pytest.mark.parametrize("bad", [0, -3, 2.5])
def test_build_rejects_bad_N(bad):
    with pytest.raises(ValueError):
        build_spin_ops(bad)


@given(st.integers(1, 60))
def test_su2_property(N):
    r = build_spin_ops(N)
    assert np.max(np.abs(r.Sx @ r.iSy - r.iSy @ r.Sx + r.Sz)) <= 1e-12 * max(1, N)


# ------------------------------------------------------------ coherent states

def test_coherent_poles():
    r = build_spin_ops(5)
    up = coherent_state(r, (math.pi / 2, math.pi / 2))
    dn = coherent_state(r, (math.pi / 2, -math.pi / 2))
    e0 = np.zeros(6)
    e0[0] = 1
    assert np.allclose(np.abs(up), e0, atol=1e-12)
    assert np.allclose(np.abs(dn), e0[::-1], atol=1e-12)


def test_coherent_x_spin_half():
    v = coherent_state(build_spin_ops(1), (math.pi / 2, 0.0))
    assert np.allclose(v, [1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-14)


@settings(max_examples=40)
@given(st.integers(1, 40), st.floats(0.05, math.pi - 0.05), st.floats(-math.pi, math.pi))
def test_coherent_expectation(N, th, ph):
    """<S> of the coherent state is (N/2) times the unit vector."""
    r = build_spin_ops(N)
    v = coherent_state(r, (th, ph))
    x, y, z = math.sin(th) * math.cos(ph), math.cos(th), math.sin(th) * math.sin(ph)
    assert abs(np.vdot(v, v) - 1) < 1e-10
    Sy = -1j * r.iSy
    got = [np.vdot(v, O @ v).real for O in (r.Sx, Sy, r.Sz)]
    assert np.allclose(got, [N / 2 * x, N / 2 * y, N / 2 * z], atol=1e-8 * N)


# ------------------------------------------------------------ normalization map

def test_normalization_binomial_row():
    m = normalization_map(4)
    assert np.allclose(m.logEntries, 0.5 * np.log([1, 4, 6, 4, 1]), atol=1e-15)


def test_normalization_large_N_against_mpmath():
    # independent oracle: arbitrary-precision binomial, frozen value 344.73...
    ref = float(mpmath.log(mpmath.binomial(1000, 500)) / 2)
    got = normalization_map(1000).logEntries[500]
    assert math.isfinite(got)
    assert abs(got - ref) < 1e-9
    assert abs(got - 344.73363078392560) < 1e-9


@given(st.integers(1, 3000))
def test_normalization_symmetric(N):
    e = normalization_map(N).logEntries
    assert e[0] == 0.0 and e[-1] == 0.0
    assert np.array_equal(e, e[::-1])


# ------------------------------------------------------------ scaled vectors

@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False), min_size=1, max_size=30).filter(
    lambda v: any(x != 0 for x in v)), st.floats(-700, 700))
def test_scaled_vector_unit_max(vals, ls):
    v = ScaledVector(np.array(vals), ls)
    assert np.max(np.abs(v.coefficients)) == 1.0
    assert math.isfinite(v.logScale)


def test_scaled_vector_from_log_roundtrip():
    lv = np.array([-2000.0, -1999.0, -np.inf, -1998.5])
    v = ScaledVector.from_log(lv)
    assert np.allclose(v.log_abs()[[0, 1, 3]], lv[[0, 1, 3]], atol=1e-12)
    assert v.log_abs()[2] == -np.inf


# ------------------------------------------------------------ imaginary rotation

def test_chi_values():
    assert chi_of(INF) == 0.0
    assert abs(chi_of(2) - float(mpmath.atanh(mpmath.mpf(1) / 2))) <= 1e-16
    assert abs(chi_of(2) - 0.549306) < 1e-6


def test_rotation_identity_at_zero():
    v = ScaledVector(np.arange(1.0, 8.0), 3.0)
    w = apply_imaginary_rotation(6, 0.0, v)
    assert np.array_equal(w.coefficients, v.coefficients) and w.logScale == v.logScale


@pytest.mark.parametrize("N,chi", [(4, 0.3), (10, chi_of(2)), (30, 1.7)])
def test_rotation_matches_expm(N, chi):
    r = build_spin_ops(N)
    M, ls = rotation_matrix(N, chi, +1)
    ref = expm(chi * r.Sx)
    assert np.allclose(M * math.exp(ls), ref, rtol=1e-10, atol=1e-12 * np.max(ref))
    Mn, lsn = rotation_matrix(N, chi, -1)
    refn = expm(-chi * r.Sx)
    assert np.allclose(Mn * math.exp(lsn), refn, rtol=1e-9, atol=1e-11 * np.max(np.abs(refn)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.floats(0.0, 3.0), st.integers(0, 2 ** 31))
def test_rotation_inverse_pair(N, chi, seed):
    # exp(chi Sx) has condition number exp(chi N); a generic vector survives the
    # round trip in float64 only while that stays below ~1e6
    assume(chi * N <= 15.0)
    rng = np.random.default_rng(seed)
    v = ScaledVector(rng.uniform(0.5, 1.5, N + 1), 0.0)
    w = apply_imaginary_rotation(N, chi, apply_imaginary_rotation(N, chi, v, +1), -1)
    diff = np.max(np.abs(w.value() - v.value())) / np.max(np.abs(v.value()))
    assert diff <= 1e-9


@pytest.mark.parametrize("N", [2, 10, 27])
def test_rotation_inverse_pair_d2(N):
    v = ScaledVector(np.linspace(1.0, 2.0, N + 1), 0.0)
    chi = chi_of(2)
    w = apply_imaginary_rotation(N, chi, apply_imaginary_rotation(N, chi, v, +1), -1)
    assert np.max(np.abs(w.value() - v.value())) / 2.0 <= 1e-9


def test_rotation_rejects_nonfinite():
    with pytest.raises(ValueError):
        apply_imaginary_rotation(3, float("nan"), ScaledVector(np.ones(4)))


def test_inversion_operator_flips():
    r = build_spin_ops(5)
    R = inversion_operator(5)
    assert np.allclose(R @ r.Sz @ R, -r.Sz)
    assert np.allclose(R @ r.Sx @ R, r.Sx)
