import math

import numpy as np
import pytest
from scipy import integrate, stats

from ctclevy import vix
from ctclevy.errors import StateRegionError, ValidationError
from ctclevy.levy import REFERENCE_COMPOSITE_HESTON as R, catalog, composite_heston, heston, levy_drift_scale
from ctclevy.montecarlo import SimPlan, euler_clock_paths, stream
from ctclevy.riccati import solve_U, solve_u_transform

from oracles import ncx2_cir

SPEC = composite_heston(**R)
ORDINARY = heston(2.0, 1.0, 1.2, -0.7, 1.1, sigma=0.2)


def ordinary_call_oracle(spec, K, T):
    """E[(VIX_T - K)^+] by quadrature against the noncentral chi-square law of u_T."""
    lin = vix.vix_linear(spec)
    ul = spec.u_layer
    law = ncx2_cir(ul.kappa, ul.theta, ul.sigma, spec.u0, T)
    f = lambda x: max(math.sqrt(lin.a_coef * x + lin.b_coef) - K, 0.0) * law.pdf(x)
    return integrate.quad(f, 0, np.inf, limit=500)[0]


@pytest.mark.parametrize("K", [0.0, 0.1, 0.2, 0.25, 0.4])
def test_fourier_call_matches_ncx2_quadrature(K):
    assert vix.vix_call_fourier_ordinary(ORDINARY, K, 0.25) == pytest.approx(
        ordinary_call_oracle(ORDINARY, K, 0.25), abs=1e-6)


def test_fourier_call_discounting():
    p0 = vix.vix_call_fourier_ordinary(ORDINARY, 0.2, 0.25)
    p1 = vix.vix_call_fourier_ordinary(ORDINARY, 0.2, 0.25, rate=0.04)
    assert p1 == pytest.approx(p0 * math.exp(-0.01), rel=1e-10)


def test_quadrature_pricer_matches_fourier_on_ordinary_model():
    Ks = np.array([0.0, 0.1, 0.2, 0.25])
    q = vix.vix_call_quadrature(ORDINARY, Ks, 0.25)
    f = np.array([vix.vix_call_fourier_ordinary(ORDINARY, K, 0.25) for K in Ks])
    assert np.max(np.abs(q - f)) < 1e-5


def test_ctc_radicand_two_routes():
    ev = vix.VixAffine(SPEC)
    for u, v in [(0.02, 1.3), (0.08, 1.5), (0.3, 0.6)]:
        assert ev.squared(u, v) == pytest.approx(vix.vix_squared_laplace(SPEC, u, v), abs=1e-9)


def test_ctc_radicand_against_nested_euler():
    u, v = 0.08, 1.5
    _, _, clock = euler_clock_paths(SPEC, vix.TAU_BAR, 100_000, 1e-4, stream(7, 1), u_start=u, v_start=v)
    mc = levy_drift_scale(SPEC) * clock / vix.TAU_BAR
    se = mc.std() / math.sqrt(len(mc))
    assert abs(vix.VixAffine(SPEC).squared(u, v) - mc.mean()) < 4 * se


def test_ctc_reduces_to_ordinary_when_v_is_frozen():
    frozen = composite_heston(**dict(R, v0=1.0, theta_v=1.0, sigma_v=0.0))
    plain = heston(R["kappa_u"], R["theta_u"], R["sigma_u"], R["rho_u"], R["u0"])
    for u in (0.01, 0.08, 0.3):
        assert vix.vix_spot_ctc(frozen, u, 1.0) == pytest.approx(vix.vix_spot_ordinary(plain, u), abs=1e-9)


def test_jump_model_vix_from_laplace_transform():
    spec = catalog("JH")
    h = 1e-4
    sol = solve_U(spec, psiL=np.array([-h, h]) + 0j, m=0.0, horizon=vix.TAU_BAR, keep_times=[vix.TAU_BAR])
    g = np.log(sol.chf(vix.TAU_BAR).real)
    mean_U = (g[1] - g[0]) / (2 * h)      # psiL = -l gives E[exp(-l U)]
    ref = levy_drift_scale(spec) * mean_U / vix.TAU_BAR
    assert vix.vix_spot_ordinary(spec, spec.u0) ** 2 == pytest.approx(ref, rel=1e-7)


def test_small_mean_reversion_limit_is_continuous():
    spec = heston(1e-9, 0.0, 0.3, 0.0, 0.05)
    ref = 0.05          # with no drift E[u_s] = u0 throughout the window
    assert vix.vix_spot_ordinary(spec, 0.05) ** 2 == pytest.approx(ref, rel=1e-6)


def test_u_moments_against_transform():
    spec = catalog("CompositeJH")
    h = 1e-3
    sol = solve_u_transform(spec, np.array([-h, 0, h]) + 0j, horizon=0.3, keep_times=[0.3])
    g = np.log(sol.chf(0.3).real)
    mean, var = vix.u_moments(spec, 0.3)
    assert mean == pytest.approx((g[2] - g[0]) / (2 * h), rel=1e-6)
    assert var == pytest.approx((g[2] - 2 * g[1] + g[0]) / h ** 2, rel=1e-4)


def test_jump_rate_sampler_moments():
    spec = catalog("CompositeJH")
    sampler = vix.JumpRateSampler(spec, 1.0)
    x = sampler.sample(np.full(100_000, 0.3), stream(4, 0))
    mean, var = vix.u_moments(spec, 0.3)
    assert abs(x.mean() - mean) < 4 * x.std() / math.sqrt(len(x))
    assert x.var() == pytest.approx(var, rel=0.03)


def test_exact_simulation_matches_quadrature_pricer():
    T = 0.1
    F = vix.vix_futures_quadrature(SPEC, T)
    Ks = np.array([0.9, 1.0, 1.1]) * F
    q = vix.vix_call_quadrature(SPEC, Ks, T)
    p, se = vix.price_vix_option_exact(SPEC, Ks, T, SimPlan(paths=100_000, seed=9))
    assert np.all(np.abs(q - p) < 4 * se)


def test_exact_simulation_terminal_v_law():
    T = 0.2
    _, _, v, V = vix.simulate_vix_exact(SPEC, T, SimPlan(paths=20_000, seed=2))
    law = ncx2_cir(R["kappa_v"], R["theta_v"], R["sigma_v"], R["v0"], T)
    assert stats.kstest(v, law.cdf).pvalue > 0.01
    from ctclevy import cir
    assert abs(V.mean() - cir.integrated_mean(R["kappa_v"], R["theta_v"], R["v0"], T)) < 4 * V.std() / math.sqrt(len(V))


def test_exact_simulation_seeded():
    plan = SimPlan(paths=2000, seed=5)
    a = vix.price_vix_option_exact(SPEC, [0.3], 0.1, plan)
    b = vix.price_vix_option_exact(SPEC, [0.3], 0.1, plan)
    assert np.array_equal(a[0], b[0])


def test_vix_implied_vol_round_trip():
    from ctclevy.black import black_forward
    price = float(black_forward(0.3, 0.33, 0.1, 0.9))
    assert vix.vix_implied_vol(price, 0.3, 0.33, 0.1) == pytest.approx(0.9, abs=1e-8)


def test_state_validation():
    with pytest.raises(ValidationError):
        vix.vix_spot_ordinary(ORDINARY, -0.1)
    with pytest.raises(ValidationError):
        vix.smalltau_diagnostics(catalog("CompositeJH"), 0.07, 1.5, np.arange(1, 31) / 365)
    with pytest.raises(ValidationError):
        vix.vix_call_fourier_ordinary(SPEC, 0.2, 0.1)


def test_negative_radicand_is_reported():
    # a strongly negative state makes the affine radicand negative
    with pytest.raises((StateRegionError, ValidationError)):
        vix.vix_spot_ctc(SPEC, -5.0, 1.0)
