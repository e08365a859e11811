import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from ctclevy import levy
from ctclevy.errors import DomainError, ValidationError
from ctclevy.levy import CgmySpec, catalog, composite_heston, heston


def cgmy_by_quadrature(cg, m):
    """Exponent of the CGMY process by integrating against its Levy density."""
    def part(sign, tempering):
        def f(x, which):
            z = np.exp(1j * m * sign * x)
            comp = 1 + (1j * m * sign * x if cg.Y > 1 else 0)
            val = (z - comp) * cg.C * np.exp(-tempering * x) / x ** (1 + cg.Y)
            return val.real if which == 0 else val.imag
        re = integrate.quad(f, 0, np.inf, args=(0,), limit=400, epsabs=1e-12)[0]
        im = integrate.quad(f, 0, np.inf, args=(1,), limit=400, epsabs=1e-12)[0]
        return re + 1j * im
    return part(1, cg.M) + part(-1, cg.G)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("Y", [0.5, 1.3, 1.6975])
@pytest.mark.parametrize("m", [0.3, 1.0, 4.0])
def test_cgmy_exponent_matches_levy_measure(Y, m):
    cg = CgmySpec(0.1071, 3.4883, 24.8861, Y)
    ref = cgmy_by_quadrature(cg, m)
    got = levy.cgmy_exponent(cg, m)
    if Y > 1:
        # the closed form carries the compensator i m E[J_1]
        ref += 1j * m * levy.mean_jump(levy.composite_jh(1, 1, 1, 1, 1, 0.1, cg.C, cg.G, cg.M, Y, 0.1, 1))
    assert abs(got - ref) < 1e-6 * max(1, abs(ref))


@pytest.mark.parametrize("kind", levy.KINDS)
def test_base_exponent_is_martingale_normalised(kind):
    spec = catalog(kind)
    assert abs(levy.psi_base(spec, -1j)) < 1e-13
    assert abs(levy.psi_base(spec, 0.0)) < 1e-13


def test_joint_exponent_reduces_to_marginal():
    spec = catalog("CompositeJH")
    m = np.array([0.5, 2.0, -3.0])
    assert np.allclose(levy.psi_joint(spec.base, m, 0.0), levy.cgmy_exponent(spec.cgmy, m))
    assert np.allclose(levy.psi_ju_Q(spec.base, m, 0.0), 0.0)


def test_ju_moments_by_finite_difference():
    spec = catalog("JH")
    h = 1e-4
    g = lambda x: levy.psi_joint(spec.base, 0.0, x)
    d1 = (g(h) - g(-h)) / (2 * h)
    d2 = (g(h) - 2 * g(0.0) + g(-h)) / h ** 2
    assert abs(d1 / 1j - levy.mean_ju(spec)) < 1e-6
    assert abs(-d2.real - levy.var_ju(spec)) < 1e-4


def test_drift_scale_unit_for_brownian_base():
    assert levy.levy_drift_scale(catalog("Heston")) == pytest.approx(1.0)
    assert levy.composite_rate_u(catalog("Heston")) == -catalog("Heston").u_layer.kappa


def test_exponent_outside_strip_raises():
    spec = catalog("JH")
    with pytest.raises(DomainError):
        levy.cgmy_exponent(spec.cgmy, 1j * (spec.cgmy.G + 1))


@pytest.mark.parametrize("kind", levy.KINDS)
def test_config_round_trip(kind, tmp_path):
    spec = catalog(kind)
    path = tmp_path / "m.cfg"
    path.write_text(levy.dump_config(spec))
    assert levy.load_config(path) == spec
    assert levy.from_config(levy.to_config(spec)) == spec


def test_json_config(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"kind": "Heston", "kappa_u": 2, "theta_u": 0.04, "sigma_u": 0.3, "rho_u": -0.7, "u0": 0.04}')
    assert levy.load_config(path) == heston(2, 0.04, 0.3, -0.7, 0.04)


@pytest.mark.parametrize("bad", [
    dict(kind="Nope"),
    dict(kind="Heston", kappa_u=1, theta_u=0.04, sigma_u=0.3, rho_u=0, u0=-0.1),
    dict(kind="Heston", kappa_u=1, theta_u=0.04, sigma_u=-0.3, rho_u=0, u0=0.1),
    dict(kind="Heston", kappa_u=1, theta_u=0.04, sigma_u=0.3, rho_u=1.5, u0=0.1),
    dict(kind="Heston", kappa_u=1, theta_u=0.04, sigma_u=0.3, rho_u=0, u0=0.1, bogus=1),
    dict(kind="JH", kappa_u=1, theta_u=0.04, eta_u=1, C=0.1, G=2, M=3, Y=2.0, u0=0.1),
    dict(kind="JH", kappa_u=1, theta_u=0.04, eta_u=1, C=0.1, G=2, M=3, Y=1.5, u0=0.1, sigma_u=0.2),
    dict(kind="CompositeHeston", kappa_u=1, theta_u=0.04, sigma_u=0.3, rho_u=0, u0=0.1),
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ValidationError):
        levy.from_config(bad)


def test_feller_report(caplog):
    spec = composite_heston(**levy.REFERENCE_COMPOSITE_HESTON)
    report = levy.check_feller(spec)
    assert report == {"u": False, "v": True}
    assert "u-layer violates" in caplog.text


@given(st.floats(-30, 30), st.floats(0.05, 1.0))
def test_brownian_exponent_is_gaussian(m, sigma):
    spec = heston(1, 0.04, 0.3, 0, 0.04, sigma=sigma)
    assert levy.psi_levy(spec, m) == pytest.approx(-0.5 * sigma ** 2 * m * m)


@given(st.floats(-20, 20))
def test_cgmy_exponent_conjugate_symmetry(m):
    cg = catalog("CompositeJH").cgmy
    a = levy.cgmy_exponent(cg, m)
    b = levy.cgmy_exponent(cg, -m)
    assert a.real <= 1e-12
    assert abs(a - np.conj(b)) < 1e-9 * max(1, abs(a))
