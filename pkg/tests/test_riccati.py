import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctclevy import cir
from ctclevy.errors import MomentExplosionError, ValidationError
from ctclevy.levy import REFERENCE_COMPOSITE_HESTON as R, catalog, composite_heston, heston
from ctclevy.riccati import (SolverConfig, integrate, solve_U, solve_u_transform, solve_V,
                             solve_V_joint, laplace_UV_increment)

from oracles import cir_riccati, heston_chf, integrated_cir_chf

SPEC = composite_heston(**R)
HESTON = heston(R["kappa_u"], R["theta_u"], R["sigma_u"], R["rho_u"], R["u0"])


def test_u_transform_matches_heston_closed_form():
    m = np.array([0.0, 0.5, 3.0, -7.0, 25.0])
    times = np.array([0.02, 0.3, 0.9])
    sol = solve_U(HESTON, m=m, horizon=1.0, keep_times=times)
    got = sol.chf(times)
    ref = heston_chf(m[None, :], times[:, None], R["kappa_u"], R["theta_u"], R["sigma_u"], R["rho_u"], R["u0"])
    assert np.max(np.abs(got - ref)) < 1e-9


def test_interpolation_between_nodes():
    m = np.array([2.0, 10.0])
    t = np.array([0.123456, 0.5000001])
    sol = solve_U(HESTON, m=m, horizon=1.0)
    ref = heston_chf(m[None, :], t[:, None], R["kappa_u"], R["theta_u"], R["sigma_u"], R["rho_u"], R["u0"])
    assert np.max(np.abs(sol.chf(t) - ref)) < 1e-9


def test_V_transform_matches_closed_form():
    w = np.array([0.0, 1.0, 5.0, 40.0])
    sol = solve_V(SPEC, w, horizon=0.5, keep_times=[0.1, 0.5])
    for t in (0.1, 0.5):
        ref = integrated_cir_chf(w, t, R["kappa_v"], R["theta_v"], R["sigma_v"], R["v0"])
        assert np.max(np.abs(sol.chf(t) - ref)) < 1e-10


def test_joint_V_transform_matches_closed_form():
    w, xi, t = np.array([0.5, 3.0]), np.array([1.0, -2.0]), 0.4
    sol = solve_V_joint(SPEC, w, xi, horizon=t, keep_times=[t])
    B, C = cir_riccati(1j * w, R["kappa_v"], R["sigma_v"] ** 2, R["kappa_v"] * R["theta_v"], t, b0=1j * xi)
    assert np.max(np.abs(sol.chf(t) - np.exp(B * R["v0"] + C))) < 1e-10


def test_u_transform_moments():
    h = 1e-3
    t = 0.7
    sol = solve_u_transform(HESTON, np.array([-h, 0, h]) + 0j, horizon=t, keep_times=[t])
    g = np.log(sol.chf(t).real)
    ul = HESTON.u_layer
    assert (g[2] - g[0]) / (2 * h) == pytest.approx(cir.mean(ul.kappa, ul.theta, R["u0"], t), rel=1e-6)
    assert (g[2] - 2 * g[1] + g[0]) / h ** 2 == pytest.approx(
        cir.variance(ul.kappa, ul.theta, ul.sigma, R["u0"], t), rel=1e-4)


def test_laplace_increment_against_closed_form_heston_limit():
    # sigma_v = 0 with v = theta_v = 1 makes V_t = t; the increment is a plain integrated CIR
    p = dict(R, v0=1.0, theta_v=1.0, sigma_v=0.0)
    spec = composite_heston(**p)
    l, u, tau = 2.0, 0.05, 0.1
    B, C = cir_riccati(-l, R["kappa_u"], R["sigma_u"] ** 2, R["kappa_u"] * R["theta_u"], tau)
    assert laplace_UV_increment(spec, l, u, 1.0, tau) == pytest.approx(float(np.real(np.exp(B * u + C))), abs=1e-8)
    assert laplace_UV_increment(spec, 0.0, u, 1.0, tau) == 1.0


def test_explosion_detected():
    # E[exp(z u_t)] explodes in finite time for z above the critical value
    with pytest.raises(MomentExplosionError) as err:
        solve_u_transform(HESTON, np.array([50.0 + 0j]), horizon=5.0)
    assert 0 < err.value.time < 5.0


def test_solver_config_validation():
    with pytest.raises(ValidationError):
        SolverConfig(step=0)
    with pytest.raises(ValidationError):
        SolverConfig(method="euler")
    with pytest.raises(ValidationError):
        SolverConfig(step=0.01).check_maturities([0.1])


def test_rho_v_rejected():
    from ctclevy.levy import ModelSpec, BrownianExponent, ULayer, VLayer
    spec = ModelSpec("CompositeHeston", BrownianExponent(1.0), ULayer(1, 0.04, 0.3), 0.04,
                     VLayer(1, 1, 0.2), 1.0, rho_u=-0.5, rho_v=0.3)
    with pytest.raises(ValidationError):
        solve_U(spec, m=1.0)


def test_generic_integrator_linear_ode():
    # b' = -b with b(0) = 1: c' = drift_level * b integrates to 1 - exp(-t)
    sol = integrate(lambda b: -b, np.ones(1, complex), 1.0, 1e-3, 1.0, [1.0], 0.0, argument=np.zeros(1))
    b, c = sol.at(1.0)
    assert abs(b[0] - np.exp(-1)) < 1e-12
    assert abs(c[0] - (1 - np.exp(-1))) < 1e-12


@given(st.floats(-40, 40), st.floats(0.05, 1.0))
def test_u_transform_unit_modulus_bound(m, t):
    sol = solve_U(HESTON, m=np.array([m]), horizon=1.0, keep_times=[t])
    assert abs(sol.chf(t)[0]) <= 1 + 1e-10


@pytest.mark.parametrize("kind", ["JH", "CompositeJH"])
def test_jump_u_transform_martingale(kind):
    spec = catalog(kind)
    sol = solve_U(spec, m=np.array([-1j]), horizon=1.0, keep_times=[0.5, 1.0])
    assert np.max(np.abs(sol.chf([0.5, 1.0]) - 1)) < 1e-10
