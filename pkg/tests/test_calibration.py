import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctclevy import calibration as cal
from ctclevy.calibration import Frame, ModelIVs, Quote, QuoteSet
from ctclevy.errors import ValidationError
from ctclevy.levy import REFERENCE_COMPOSITE_HESTON as R, catalog, composite_heston

SPEC = composite_heston(**R)
SMALL_SPX = {0.1: [0.9, 1.0, 1.1], 0.5: [0.8, 1.0, 1.2]}
SMALL_VIX = {0.1: [1.0, 1.25]}


@pytest.fixture(scope="module")
def small_quotes():
    return cal.synthetic_quotes(SPEC, SMALL_SPX, SMALL_VIX)


def hand_quotes():
    return QuoteSet("d", [Quote(0.1, 1.0, 0.2), Quote(0.1, 1.1, 0.25)], [Quote(0.1, 1.0, 0.8)],
                    {0.1: Frame(100.0)}, {0.1: Frame(20.0)})


def test_loss_arithmetic_by_hand():
    qs = hand_quotes()
    model = ModelIVs(np.array([0.22, 0.25]), np.array([np.nan]), {})
    spx, vix, flagged = cal.loss_terms(model, qs)
    assert spx == pytest.approx((0.1 ** 2 + 0.0) / 2)
    assert vix == pytest.approx(cal.NO_IV_PENALTY)
    assert flagged == 1
    r = cal.residual_vector(model, qs)
    assert float(r @ r) == pytest.approx(spx + vix)


def test_single_quote_ten_percent_error():
    qs = QuoteSet("d", [Quote(0.1, 1.0, 0.2)])
    model = ModelIVs(np.array([0.22]), np.empty(0), {})
    assert sum(cal.loss_terms(model, qs)[:2]) == pytest.approx(0.01)


def test_one_percent_surface_shift(small_quotes):
    model = ModelIVs(np.array([q.iv * 1.01 for q in small_quotes.spx]),
                     np.array([q.iv * 1.01 for q in small_quotes.vix]), {})
    assert sum(cal.loss_terms(model, small_quotes)[:2]) == pytest.approx(0.0002)


def test_loss_with_one_market_only():
    qs = QuoteSet("d", [Quote(0.1, 1.0, 0.2)])
    model = ModelIVs(np.array([0.3]), np.empty(0), {})
    assert cal.loss_terms(model, qs)[:2] == pytest.approx((0.25, 0.0))


def test_quote_set_validation():
    with pytest.raises(ValidationError):
        QuoteSet("d", [Quote(0.1, 1.0, -0.2)])
    with pytest.raises(ValidationError):
        QuoteSet("d", [], [Quote(0.1, 1.0, 0.8)])


@given(st.sampled_from(sorted(cal.DEFAULT_BOUNDS)), st.floats(0.0, 1.0))
def test_transform_round_trip(name, s):
    lo, hi, kind = cal.DEFAULT_BOUNDS[name]
    b = cal.ParamBound(name, lo, hi, kind)
    p = lo + s * (hi - lo)
    y = b.forward(p)
    assert b.box()[0] <= y <= b.box()[1]
    assert b.inverse(y) == pytest.approx(p, rel=1e-7, abs=1e-8 * (hi - lo))


def test_parameter_space_layout():
    space = cal.default_space(SPEC)
    assert "theta_v" in space.fixed and "theta_v" not in space.names
    assert space.state == frozenset({"u0", "v0"})
    assert set(space.structural) == set(space.names) - {"u0", "v0"}
    values = cal.free_values(SPEC, space)
    assert space.spec(values) == SPEC
    with pytest.raises(ValidationError):
        cal.ParamBound("x", 1.0, 0.5)
    with pytest.raises(ValidationError):
        cal.ParamSpace("CompositeHeston", (cal.ParamBound("u0", 0.01, 1),), {"u0": 0.1})


def test_objective_zero_at_truth(small_quotes):
    space = cal.default_space(SPEC)
    assert cal.objective(cal.free_values(SPEC, space), small_quotes, cal.JointPricer(), space) < 1e-20


def test_objective_infinite_on_pricer_failure(small_quotes):
    space = cal.default_space(SPEC)
    bad = dict(cal.free_values(SPEC, space), u0=-1.0)
    assert cal.objective(bad, small_quotes, cal.JointPricer(), space) == math.inf


def test_vix_ivs_use_model_futures(small_quotes):
    pricer = cal.JointPricer()
    ivs, fut = pricer.vix_ivs(SPEC, small_quotes.vix, small_quotes.vix_frames)
    assert fut[0.1] == pytest.approx(small_quotes.vix_frames[0.1].forward, rel=1e-12)
    assert np.all(np.isfinite(ivs))


def test_product_non_identifiability_flagged():
    # only the product y0 * y1 enters the residuals
    fn = lambda y: np.array([y[0] * y[1] - 2.0, y[0] * y[1] - 3.0, y[2] - 1.0])
    fit = cal.minimize_residuals(fn, np.array([1.0, 1.0, 0.0]), [(-5, 5)] * 3)
    # profile over the product p: (p - 2)^2 + (p - 3)^2
    grid = np.linspace(-10, 10, 200_001)
    profile = ((grid - 2) ** 2 + (grid - 3) ** 2).min()
    assert fit.loss == pytest.approx(profile, abs=1e-8)
    assert (0, 1) in [(i, j) for i, j, _ in fit.correlated]
    assert all(2 not in (i, j) for i, j, _ in fit.correlated)


def test_budget_enforced_and_best_point_kept():
    fn = lambda y: np.array([10 * (y[1] - y[0] ** 2), 1 - y[0]])
    y0 = np.array([-1.2, 1.0])
    start = float(fn(y0) @ fn(y0))
    for mode in ("local", "global"):
        fit = cal.minimize_residuals(fn, y0, [(-3, 3), (-3, 3)], budget=25, mode=mode, seed=1)
        assert fit.evaluations <= 25
        assert fit.loss <= start
        assert fit.trace == sorted(fit.trace, reverse=True)


def test_global_mode_reproducible_and_converges():
    fn = lambda y: np.array([y[0] - 0.3, 2 * (y[1] + 0.7)])
    a = cal.minimize_residuals(fn, np.zeros(2), [(-2, 2), (-2, 2)], budget=3000, mode="global", seed=4)
    b = cal.minimize_residuals(fn, np.zeros(2), [(-2, 2), (-2, 2)], budget=3000, mode="global", seed=4)
    assert np.array_equal(a.y, b.y)
    assert a.loss < 1e-12


def test_daily_calibration_recovers_state(small_quotes):
    space = cal.default_space(SPEC, free=("u0", "v0"))
    res = cal.calibrate_daily(small_quotes, space, {"u0": 0.03, "v0": 1.0}, budget=300)
    assert res.params["u0"] == pytest.approx(R["u0"], rel=1e-4)
    assert res.params["v0"] == pytest.approx(R["v0"], rel=1e-4)
    assert res.evaluations <= 300
    assert res.penalised == 0


def test_daily_calibration_budget_message(small_quotes):
    space = cal.default_space(SPEC, free=("u0", "v0"))
    res = cal.calibrate_daily(small_quotes, space, {"u0": 0.03, "v0": 1.0}, budget=3)
    assert not res.converged
    assert res.evaluations == 3
    assert "budget" in res.message


def test_two_step_needs_a_window():
    space = cal.default_space(SPEC)
    with pytest.raises(ValidationError):
        cal.calibrate_two_step([], [], space, cal.free_values(SPEC, space))


def test_two_step_single_date_all_structural_is_daily(small_quotes):
    base = cal.default_space(SPEC, free=("u0", "v0"))
    space = cal.ParamSpace(base.kind, base.params, base.fixed, frozenset())
    init = {"u0": 0.03, "v0": 1.0}
    two = cal.calibrate_two_step([small_quotes], [], space, init, budget=300)
    one = cal.calibrate_daily(small_quotes, space, init, budget=300)
    assert two.structural == pytest.approx(one.params, rel=1e-12)


def test_two_step_identical_dates_match_daily_structure(small_quotes):
    space = cal.default_space(SPEC, free=("kappa_u", "u0", "v0"))
    init = {"kappa_u": 5.0, "u0": 0.03, "v0": 1.0}
    two = cal.calibrate_two_step([small_quotes, small_quotes], [], space, init, budget=600)
    one = cal.calibrate_daily(small_quotes, space, init, budget=600)
    assert two.structural["kappa_u"] == pytest.approx(one.params["kappa_u"], rel=1e-4)
    assert two.structural["kappa_u"] == pytest.approx(R["kappa_u"], rel=1e-4)


def test_perturb_is_bounded():
    space = cal.default_space(SPEC)
    values = cal.free_values(SPEC, space)
    out = cal.perturb(values, 0.2, np.random.default_rng(0), space)
    for k, v in out.items():
        assert v == pytest.approx(values[k] * 1.2) or v == pytest.approx(values[k] * 0.8)
