import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from oracles import explicit_jacobi
from phbec.errors import ConfigError, DomainError
from phbec.phem import (
    ChannelMatrix,
    DegeneracyWarning,
    SystemSpec,
    _overlap,
    build_adiabatic_table,
    centrifugal,
    default_r_grid,
    effective_matrix,
    f_squared,
    lowest_channel,
    raw_matrix_element,
    symmetrized_matrix,
)
from phbec.specfun import JacobiParams, gauss_jacobi_rule, jacobi_norm
from phbec.twobody import GaussianPotential

STIFF = GaussianPotential(3.1985e6, 0.005)
# r0 far beyond any hyperradius used: V = c to ~1e-12 relative
FLAT = 1e7


def spec(a=10, k=4, pot=STIFF, **kw):
    return SystemSpec(a, k, pot, **kw)


# ---------------------------------------------------------------- f^2

def test_f_squared_k0_closed_form():
    assert f_squared(0, 0, 10) == pytest.approx(45.0, rel=1e-15)
    # number of pairs
    for a in range(3, 40):
        assert f_squared(0, 0, a) == pytest.approx(a * (a - 1) / 2, rel=1e-14)


def test_f_squared_two_particle_limit():
    # both correction terms carry a factor (A - 2)
    for l in range(3):
        assert _overlap(2, l, 0.37, -1.2, 5.0) == 1.0


def test_f_squared_against_explicit_sum():
    a, b = 11.0, 0.5
    p_half, _ = explicit_jacobi(2, a, b, -0.5)
    p_minus, _ = explicit_jacobi(2, a, b, -1.0)
    p_plus, _ = explicit_jacobi(2, a, b, 1.0)
    want = 1 + (2 * 8 * p_half + 8 * 7 / 2 * p_minus) / p_plus
    assert f_squared(2, 0, 10) == pytest.approx(want, rel=1e-12)


def test_f_squared_first_harmonic_vanishes():
    for a in (3, 10, 35):
        assert f_squared(1, 0, a) == 0.0


@pytest.mark.parametrize("a", [3, 5, 10, 20, 35])
def test_f_squared_non_negative(a):
    for k in range(13):
        assert f_squared(k, 0, a) >= 0.0


def test_f_squared_domain():
    with pytest.raises(DomainError):
        f_squared(0, 0, 2)


# ---------------------------------------------------------------- matrix elements

def test_zero_potential_gives_zero_elements():
    s = spec(pot=GaussianPotential(0.0, 0.1))
    assert raw_matrix_element(1, 2, s, 1.3) == 0.0
    assert np.all(symmetrized_matrix(s, 1.3).entries == 0.0)


@pytest.mark.parametrize("a,r", [(3, 0.7), (10, 2.0), (20, 5.0)])
def test_constant_potential_identity(a, r):
    c = 2.5
    s = spec(a, 6, GaussianPotential(c, FLAT))
    mat = symmetrized_matrix(s, r).entries
    want = np.diag([c * f_squared(k, 0, a) for k in range(7)])
    assert np.allclose(mat, want, rtol=1e-10, atol=1e-10 * c * f_squared(0, 0, a))
    h = jacobi_norm(JacobiParams(s.alpha, s.beta, 3))
    assert raw_matrix_element(3, 3, s, r) == pytest.approx(c * h, rel=1e-10)
    assert abs(raw_matrix_element(2, 3, s, r)) <= 1e-10 * c * h


def test_element_against_adaptive_quadrature():
    s = spec(3, 2, GaussianPotential(20.0, 0.1))
    a, b = s.alpha, s.beta

    def f(z):
        p0 = 1.0
        p1, _ = explicit_jacobi(1, a, b, z)
        return p0 * p1 * 20.0 * math.exp(-(1 + z) / 2 / 0.01) * (1 - z) ** a * (1 + z) ** b

    want, _ = integrate.quad(f, -1, 1, points=[-0.9, -0.5], epsabs=0, epsrel=1e-12, limit=500)
    assert raw_matrix_element(0, 1, s, 1.0) == pytest.approx(want, rel=1e-9)


def test_explicit_rule_matches_adaptive():
    s = spec(5, 3, GaussianPotential(20.0, 0.3))
    rule = gauss_jacobi_rule(200, s.alpha, s.beta)
    for k, k2 in [(0, 0), (1, 3), (2, 2)]:
        assert raw_matrix_element(k, k2, s, 1.5, rule) == pytest.approx(
            raw_matrix_element(k, k2, s, 1.5), rel=1e-10, abs=1e-14)


def test_explicit_rule_must_match_exponents():
    s = spec(5, 3)
    with pytest.raises(DomainError):
        raw_matrix_element(0, 0, s, 1.0, gauss_jacobi_rule(10, 1.0, 0.5))


def test_stiff_matrix_against_fourfold_rule():
    base = symmetrized_matrix(spec(10, 4), 2.0)
    fine = symmetrized_matrix(spec(10, 4, quad_points=4 * base.nodes_used), 2.0)
    scale = np.max(np.abs(fine.entries))
    assert np.max(np.abs(base.entries - fine.entries)) <= 1e-8 * scale


@settings(max_examples=15, deadline=None)
@given(a=st.integers(3, 35), r=st.floats(0.05, 15.0))
def test_symmetry_is_exact(a, r):
    for mat in (symmetrized_matrix(spec(a, 4), r), effective_matrix(spec(a, 4), r)):
        assert np.array_equal(mat.entries, mat.entries.T)
        assert np.all(np.isfinite(np.diag(mat.entries)))


# ---------------------------------------------------------------- effective matrix

def test_three_body_free_scalar():
    s = spec(3, 0, GaussianPotential(0.0, 0.1))
    assert effective_matrix(s, 1.0).entries[0, 0] == pytest.approx(4.0, rel=1e-15)


def test_centrifugal_identity_exact():
    for a in range(3, 36):
        alpha = Fraction(3 * a - 8, 2)
        beta = Fraction(1, 2)
        lam = Fraction(3 * a - 6, 2)
        for k in range(13):
            lk = 2 * k + lam
            assert lam * (lam + 1) + 4 * k * (k + alpha + beta + 1) == lk * (lk + 1)


def test_free_diagonal():
    s = spec(7, 5, GaussianPotential(0.0, 0.1))
    r = 1.7
    m = effective_matrix(s, r).entries
    lam, al, be = s.grand_orbital, s.alpha, s.beta
    want = [(lam * (lam + 1) + 4 * k * (k + al + be + 1)) / r ** 2 + r ** 2 / 4 for k in range(6)]
    assert np.allclose(np.diag(m), want, rtol=1e-15)
    assert np.count_nonzero(m - np.diag(np.diag(m))) == 0
    assert np.array_equal(centrifugal(s), (2 * np.arange(6) + lam) * (2 * np.arange(6) + lam + 1))


def test_free_minimum_location():
    s = spec(10, 0, GaussianPotential(0.0, 0.1))
    c = s.grand_orbital * (s.grand_orbital + 1)
    r_star = (4 * c) ** 0.25
    val = effective_matrix(s, r_star).entries[0, 0]
    assert val == pytest.approx(math.sqrt(c), rel=1e-14)
    for d in (0.99, 1.01):
        assert effective_matrix(s, r_star * d).entries[0, 0] > val


# ---------------------------------------------------------------- lowest channel

def test_lowest_channel_trivial():
    w, chi = lowest_channel(ChannelMatrix(1.0, np.array([[7.5]])))
    assert w == 7.5 and np.array_equal(chi, [1.0])
    w, chi = lowest_channel(ChannelMatrix(1.0, np.diag([3.0, 1.0, 2.0])))
    assert w == 1.0 and np.allclose(chi, [0, 1, 0])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_lowest_channel_residual_and_variational(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(5, 5)) * 10
    m = m + m.T
    w, chi = lowest_channel(ChannelMatrix(1.0, m))
    norm = np.linalg.norm(m, 2)
    assert np.linalg.norm(m @ chi - w * chi) <= 1e-10 * norm
    assert abs(np.linalg.norm(chi) - 1) < 1e-12
    for _ in range(5):
        v = rng.normal(size=5)
        v /= np.linalg.norm(v)
        assert w <= v @ m @ v + 1e-12 * norm


def test_lowest_channel_sign_conventions():
    m = np.array([[2.0, -1.0], [-1.0, 2.0]])
    _, chi = lowest_channel(ChannelMatrix(1.0, m))
    assert chi[0] > 0
    _, chi2 = lowest_channel(ChannelMatrix(1.0, m), previous_chi=-chi)
    assert np.dot(chi2, -chi) > 0


def test_inactive_channels_are_excluded():
    m = np.diag([5.0, -100.0, 3.0])
    w, chi = lowest_channel(ChannelMatrix(1.0, m, np.array([True, False, True])))
    assert w == 3.0 and np.allclose(chi, [0, 0, 1])


def test_degeneracy_is_flagged():
    with pytest.warns(DegeneracyWarning):
        lowest_channel(ChannelMatrix(2.0, np.eye(3)))


# ---------------------------------------------------------------- adiabatic table

def test_free_table():
    s = spec(10, 4, GaussianPotential(0.0, 0.1))
    tab = build_adiabatic_table(s)
    lam = s.grand_orbital
    want = lam * (lam + 1) / tab.r_grid ** 2 + tab.r_grid ** 2 / 4
    assert np.allclose(tab.omega0, want, rtol=1e-12)
    assert np.all(tab.chi[:, 0] == 1.0) and np.all(tab.chi[:, 1:] == 0.0)
    # non-uniform gradient weights cancel on a constant only to rounding
    assert np.all(np.abs(tab.derivative_term) < 1e-20)


@pytest.mark.parametrize("a,pot", [(10, STIFF), (20, GaussianPotential(20.0, 0.1)),
                                   (10, GaussianPotential(-100.0, 0.0855))])
def test_table_invariants(a, pot):
    tab = build_adiabatic_table(spec(a, 4, pot))
    assert np.allclose(np.linalg.norm(tab.chi, axis=1), 1.0, atol=1e-12)
    assert np.all(np.sum(tab.chi[1:] * tab.chi[:-1], axis=1) >= 0)
    assert np.all(tab.derivative_term >= 0)
    assert tab.diagnostics["active_channels"] == [0, 2, 3, 4]


def test_variational_ordering_in_k_max():
    grid = default_r_grid(10, 60)
    prev = None
    for k in (0, 2, 4, 6):
        w = build_adiabatic_table(spec(10, k, r_grid=grid)).omega0
        if prev is not None:
            assert np.all(w <= prev + 1e-9 * np.abs(prev))
        prev = w


def test_parallel_matches_sequential():
    s = spec(10, 4, r_grid=default_r_grid(10, 40))
    seq = build_adiabatic_table(s)
    par = build_adiabatic_table(s, workers=2)
    assert np.array_equal(seq.omega0, par.omega0)
    assert np.array_equal(seq.chi, par.chi)
    assert np.array_equal(seq.derivative_term, par.derivative_term)


def test_attractive_table_has_inner_repulsion_and_well():
    tab = build_adiabatic_table(spec(10, 4, GaussianPotential(-100.0, 0.0855)))
    w = tab.omega0
    inner = np.argmin(w)
    assert w[inner] < -30
    assert w[0] > 1e5


def test_grid_validation():
    with pytest.raises(ConfigError):
        build_adiabatic_table(spec(r_grid=[0.5, 1.0]))
    with pytest.raises(DomainError):
        spec(r_grid=[1.0, 0.5, 2.0])
    with pytest.raises(DomainError):
        spec(r_grid=[0.0, 1.0, 2.0])


@pytest.mark.parametrize("kw", [dict(a=2), dict(k=-1), dict(quad_points=0), dict(quad_points=1000)])
def test_spec_validation(kw):
    args = dict(a=10, k=4)
    args.update({k: v for k, v in kw.items() if k in ("a", "k")})
    extra = {k: v for k, v in kw.items() if k == "quad_points"}
    with pytest.raises(DomainError):
        spec(args["a"], args["k"], **extra)


def test_derived_quantities():
    s = spec(10, 4)
    assert (s.alpha, s.beta, s.grand_orbital, s.dimension) == (11.0, 0.5, 12.0, 27)
