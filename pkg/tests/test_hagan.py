import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from volfit.black import ForwardContext
from volfit.hagan import (
    SERIES_SWITCH,
    SabrParams,
    cev_local_vol,
    chi,
    expansion_terms,
    general_expansion,
    i0_taylor,
    i1_beta1,
    sigma_hagan_beta1,
    sigma_hagan_full,
    z_over_chi,
)

BASE = ForwardContext(5685.6, 0.176)

alphas = st.floats(0.05, 1.0)
rhos = st.floats(-0.95, 0.95)
nus = st.floats(0.05, 3.0)


def test_chi_examples():
    assert chi(0.0, 0.5) == 0.0
    assert chi(0.3, 0.0) == pytest.approx(math.log(math.sqrt(1.09) + 0.3), abs=1e-15)
    assert chi(0.3, 0.0) == pytest.approx(math.asinh(0.3), abs=1e-15)
    assert chi(-0.7, 0.0) == pytest.approx(-chi(0.7, 0.0), abs=1e-15)


@pytest.mark.parametrize("rho", [-1.0, 1.0, 1.5])
def test_chi_rejects_unit_correlation(rho):
    with pytest.raises(ValueError):
        chi(0.1, rho)
    with pytest.raises(ValueError):
        z_over_chi(0.1, rho)


@settings(max_examples=200, deadline=None)
@given(z=st.floats(-50, 50), rho=rhos)
def test_chi_matches_arbitrary_precision(z, rho):
    ref = float(mp.log((mp.sqrt(1 - 2 * mp.mpf(rho) * z + mp.mpf(z) ** 2) - rho + z) / (1 - mp.mpf(rho))))
    assert chi(z, rho) == pytest.approx(ref, rel=1e-12, abs=1e-15)
    assert np.sign(chi(z, rho)) == np.sign(z)


def test_z_over_chi_examples():
    assert z_over_chi(0.0, 0.4) == 1.0
    assert z_over_chi(1e-8, -0.2) == pytest.approx(1 + 1e-9, abs=1e-12)
    assert z_over_chi(0.5, 0.3) == pytest.approx(0.5 / chi(0.5, 0.3), rel=1e-15)


@pytest.mark.parametrize("rho", [-0.9, -0.3, 0.0, 0.5, 0.9])
def test_z_over_chi_continuous_at_series_switch(rho):
    below = z_over_chi(np.nextafter(SERIES_SWITCH, 0), rho)
    above = z_over_chi(SERIES_SWITCH, rho)
    assert abs(above - below) <= 1e-10
    below = z_over_chi(-np.nextafter(SERIES_SWITCH, 0), rho)
    above = z_over_chi(-SERIES_SWITCH, rho)
    assert abs(above - below) <= 1e-10


def test_atm_baseline(frozen):
    p = SabrParams(0.25, 1.0, -0.2, 1.0)
    i1 = 0.25 * -0.2 * 1.0 * 0.25 + (2 - 3 * 0.04) / 24
    assert sigma_hagan_beta1(p, BASE, 5685.6) == pytest.approx(0.25 * (1 + i1 * 0.176), abs=1e-15)
    assert sigma_hagan_beta1(p, BASE, 5685.6) == pytest.approx(frozen["hagan_atm_baseline"], abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(a=alphas, r=rhos, v=nus, tau=st.floats(0.01, 3.0), f=st.floats(1.0, 1e4))
def test_atm_identity(a, r, v, tau, f):
    ctx = ForwardContext(f, tau)
    expected = a * (1 + i1_beta1(a, r, v) * tau)
    assert abs(sigma_hagan_beta1(SabrParams(a, 1.0, r, v), ctx, f) - expected) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(a=alphas, r=rhos, v=nus, k=st.floats(-1.0, 1.0))
def test_beta1_matches_arbitrary_precision(a, r, v, k):
    strike = 100 * math.exp(k)
    ref = float(oracles.hagan_lognormal(a, r, v, 100.0, strike, 0.5))
    got = sigma_hagan_beta1(SabrParams(a, 1.0, r, v), ForwardContext(100.0, 0.5), strike)
    assert got == pytest.approx(ref, rel=1e-11)


@settings(max_examples=100, deadline=None)
@given(a=alphas, v=nus, k=st.floats(0.01, 1.0))
def test_symmetric_strikes_at_zero_correlation(a, v, k):
    p = SabrParams(a, 1.0, 0.0, v)
    ctx = ForwardContext(100.0, 0.5)
    up = expansion_terms(p, ctx, 100 * math.exp(k)).i0
    down = expansion_terms(p, ctx, 100 * math.exp(-k)).i0
    assert up == pytest.approx(down, rel=1e-13)


@settings(max_examples=200, deadline=None)
@given(a=alphas, r=rhos, v=nus, k=st.floats(-1.5, 1.5), tau=st.floats(0.01, 3.0))
def test_full_formula_reduces_at_beta_one(a, r, v, k, tau):
    ctx = ForwardContext(100.0, tau)
    p = SabrParams(a, 1.0, r, v)
    strike = 100 * math.exp(k)
    assert abs(sigma_hagan_full(p, ctx, strike) - sigma_hagan_beta1(p, ctx, strike)) <= 1e-14


def test_full_formula_at_the_money():
    p = SabrParams(0.25, 0.9, -0.2, 1.0)
    f = BASE.forward
    fb = f ** 0.1
    i1 = 0.01 * 0.0625 / (24 * fb * fb) + 0.25 * -0.2 * 0.25 * 1.0 * 0.9 / fb + (2 - 3 * 0.04) / 24
    assert sigma_hagan_full(p, BASE, f) == pytest.approx(0.25 / fb * (1 + i1 * 0.176), rel=1e-14)


def test_baseline_smile_has_minimum_near_forward():
    strikes = np.arange(3900.0, 7401.0, 100.0)
    vols = sigma_hagan_full(SabrParams(0.25, 0.9, -0.2, 1.0), BASE, strikes)
    k_min = strikes[np.argmin(vols)]
    assert abs(k_min / BASE.forward - 1) < 0.1
    assert vols[0] > vols[np.argmin(vols)] < vols[-1]


def test_atm_increasing_in_alpha():
    alphas_ = np.linspace(0.05, 1.0, 40)
    atm = [sigma_hagan_full(SabrParams(a, 0.9, -0.2, 1.0), BASE, BASE.forward) for a in alphas_]
    assert np.all(np.diff(atm) > 0)


def test_i0_taylor_examples():
    p = SabrParams(0.5, 1.0, 0.0, 1.0)
    ctx = ForwardContext(100.0, 1.0)
    assert i0_taylor(p, ctx, 100.0) == 0.5
    assert i0_taylor(p, ctx, 100 * math.exp(0.1)) == pytest.approx(0.5 + (1 / 6) * 2.0 * 0.01, abs=1e-15)


def test_i0_taylor_third_order():
    p = SabrParams(0.5, 1.0, -0.3, 0.5)
    ctx = ForwardContext(100.0, 0.25)
    hs = [0.2, 0.1, 0.05]
    err = [abs(expansion_terms(p, ctx, 100 * math.exp(h)).i0 - i0_taylor(p, ctx, 100 * math.exp(h))) for h in hs]
    ratios = [err[0] / err[1], err[1] / err[2]]
    assert all(6 <= r <= 10 for r in ratios), ratios


def test_general_expansion_with_linear_local_vol_is_beta_one():
    gamma = 1.25
    ctx = ForwardContext(100.0, 0.3)
    for k in (70.0, 95.0, 130.0):
        terms = general_expansion(0.2, -0.3, 0.5, ctx, k, lambda x: gamma * x, lambda x: gamma, lambda x: 0.0)
        expected = sigma_hagan_beta1(SabrParams(0.25, 1.0, -0.3, 0.5), ctx, k)
        assert terms.i0 * (1 + terms.i1 * ctx.tau) == pytest.approx(expected, rel=1e-12)


def test_general_expansion_cev_close_to_full_formula():
    beta = 0.7
    ctx = ForwardContext(100.0, 0.5)
    p = SabrParams(0.25 * 100 ** 0.3, beta, -0.25, 0.4)
    for k in (80.0, 90.0, 110.0, 125.0):
        terms = general_expansion(p.alpha, p.rho, p.nu, ctx, k, *cev_local_vol(beta))
        assert terms.i0 * (1 + terms.i1 * ctx.tau) == pytest.approx(sigma_hagan_full(p, ctx, k), rel=2e-4)


def test_general_expansion_matches_oracle():
    c, dc, d2c = cev_local_vol(0.6)
    ctx = ForwardContext(50.0, 1.0)
    got = general_expansion(1.1, 0.2, 0.7, ctx, 42.0, c, dc, d2c)
    ref = oracles.general_local_vol_formula(
        1.1, 0.2, 0.7, 50.0, 42.0, 1.0,
        lambda x: x ** mp.mpf("0.6"),
        lambda x: mp.mpf("0.6") * x ** mp.mpf("-0.4"),
        lambda x: mp.mpf("-0.24") * x ** mp.mpf("-1.4"),
    )
    assert got.i0 * (1 + got.i1) == pytest.approx(float(ref), rel=1e-12)


def test_curvature_term_of_i1_vanishes_at_beta_one():
    c, dc, d2c = cev_local_vol(1.0)
    f_ave = 93.0
    g1, g2 = dc(f_ave) / c(f_ave), d2c(f_ave) / c(f_ave)
    assert 2 * g2 - g1 * g1 + 1 / f_ave**2 == pytest.approx(0.0, abs=1e-18)


def test_params_validation():
    with pytest.raises(ValueError):
        SabrParams(0.0, 1.0, 0.0, 0.5)
    with pytest.raises(ValueError):
        SabrParams(0.2, 1.2, 0.0, 0.5)
    with pytest.raises(ValueError):
        SabrParams(0.2, 1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        SabrParams(0.2, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        sigma_hagan_beta1(SabrParams(0.2, 1.0, 0.0, 0.5), BASE, -1.0)
