"""Regime classification, limit-law constants, and the Poisson cross-check."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from stablediff import presets
from stablediff.asymptotics import (
    EULER_GAMMA,
    SIN_INTEGRAL_A,
    LimitLaw,
    RegimeReport,
    char_exponent,
    classify_regime,
    compute_rho,
    compute_rho_eps,
    ell_one,
    limit_law,
    poisson_solution,
    slow_var_transforms,
)
from stablediff.errors import (
    ClassificationFailed,
    Divergent,
    InvalidAlpha,
    InvalidRequest,
    NotCentered,
    PoissonUnavailable,
)
from stablediff.model import DiffusionModel, compute_kappa, invariant_integral


def f_id(x):
    return np.asarray(x, dtype=np.float64)


def ell_logsq(v):
    return (1.0 + np.log(v)) ** 2


# ---------------------------------------------------------------------------
# constants

def test_hardcoded_constants():
    # the module import already ran the quadrature self-check; pin the values
    assert EULER_GAMMA == pytest.approx(np.euler_gamma, abs=1e-16)
    assert SIN_INTEGRAL_A == pytest.approx(1.0 - EULER_GAMMA, abs=1e-16)


# ---------------------------------------------------------------------------
# rho and the slowly-varying transforms

def test_rho_trivial_ell_diverges():
    assert math.isinf(compute_rho(ell_one))


def test_rho_eps_trivial_ell():
    # for ell = 1 the truncated integral is 4 log(1/eps)
    assert compute_rho_eps(ell_one, math.exp(-3.0)) == pytest.approx(12.0, rel=1e-9)
    assert compute_rho_eps(ell_one, 1.0) == 0.0
    assert compute_rho_eps(ell_one, 0.5) == pytest.approx(4.0 * math.log(2.0), rel=1e-9)


def test_rho_eps_requires_positive_eps():
    with pytest.raises(InvalidRequest):
        compute_rho_eps(ell_one, 0.0)


def test_rho_log_squared_against_independent_scheme():
    # ell = (1+log v)^2 gives a finite rho; cross-check against scipy on the
    # log-substituted double integral (a different integrator and mesh)
    def inner(u):
        return quad(lambda s: math.exp(-0.5 * s) / (1.0 + u + s) ** 2,
                    0.0, np.inf, limit=200)[0]

    oracle = quad(lambda u: inner(u) ** 2, 0.0, np.inf, limit=200)[0]
    assert compute_rho(ell_logsq) == pytest.approx(oracle, rel=1e-6)
    u_hi = math.log(1e4)
    oracle_eps = quad(lambda u: inner(u) ** 2, 0.0, u_hi, limit=200)[0]
    assert compute_rho_eps(ell_logsq, 1e-4) == pytest.approx(oracle_eps, rel=1e-9)


def test_transforms_trivial_ell():
    tr = slow_var_transforms(ell_one)
    assert tr.n_divergent
    assert tr.L(1.0) == 0.0
    assert tr.L(1e5) == pytest.approx(math.log(1e5), rel=1e-10)
    with pytest.raises(Divergent):
        tr.N(10.0)


def test_transforms_log_squared():
    tr = slow_var_transforms(ell_logsq)
    assert not tr.n_divergent
    # N(x) = int_x^inf dv/(v (1+log v)^2) = 1/(1+log x) exactly
    for x in (10.0, 100.0, 1e4):
        assert tr.N(x) == pytest.approx(1.0 / (1.0 + math.log(x)), rel=1e-3)
    # M(x) is the rho integrand truncated at x, i.e. rho_eps at eps = 1/x
    assert tr.M(50.0) == pytest.approx(compute_rho_eps(ell_logsq, 1.0 / 50.0), rel=1e-10)


def test_L_slow_variation_trend():
    # L(lambda x)/L(x) -> 1 monotonically along x = 10^k
    tr = slow_var_transforms(ell_logsq)
    devs = [abs(tr.L(3.0 * 10.0**k) / tr.L(10.0**k) - 1.0) for k in range(2, 7)]
    assert all(a > b for a, b in zip(devs, devs[1:]))
    assert devs[-1] < 0.02


# ---------------------------------------------------------------------------
# classification

def test_classify_claimed_kinetic3(kinetic3):
    alpha, fp, fm = presets.kinetic_tail_limits(3.0)
    rep = classify_regime(kinetic3, f_id, claimed=(alpha, None, fp, fm))
    assert rep.regime == "Levy"
    assert rep.alpha == pytest.approx(4.0 / 3.0, rel=1e-12)
    assert rep.f_plus == pytest.approx(4.0**-1.25, rel=1e-12)
    assert rep.f_minus == pytest.approx(-(4.0**-1.25), rel=1e-12)
    assert rep.f_in_L1mu  # alpha > 1
    assert rep.tail_diagnostics["mode"] == "claimed"


def test_classify_claimed_driftless_critical():
    model = presets.driftless(2.5, 1.0)
    f = presets.driftless_observable(1.0)
    rep = classify_regime(model, f, claimed=(2.0, None, 1.0, -1.0))
    assert rep.regime == "CriticalDiffusive"
    assert math.isinf(rep.tail_diagnostics["rho"])


def test_classify_claimed_heavy_echo(heavy1):
    # f chosen so the tail ratio is exactly 0.7 on the right and 0 on the
    # left; f overflows past |x| ~ 18.8, which the classifier must skip
    def f(x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(over="ignore"):
            return np.where(x > 0.0, 0.7 * np.exp(2.0 * x * x), 0.0)

    rep = classify_regime(heavy1, f, claimed=(0.5, None, 0.7, 0.0))
    assert rep.regime == "Levy"
    assert rep.alpha == 0.5
    assert (rep.f_plus, rep.f_minus) == (0.7, 0.0)
    assert not rep.f_in_L1mu  # alpha < 1
    assert any("overflow" in w for w in rep.tail_diagnostics["warnings"])


def test_classify_estimated_kinetic3(kinetic3):
    rep = classify_regime(kinetic3, f_id)
    assert rep.regime == "Levy"
    assert rep.alpha == pytest.approx(4.0 / 3.0, abs=0.02)
    assert rep.f_plus == pytest.approx(4.0**-1.25, rel=1e-2)
    assert rep.f_minus == pytest.approx(-(4.0**-1.25), rel=1e-2)
    assert any("ell set to 1" in w for w in rep.tail_diagnostics["warnings"])


def test_classify_estimated_near_boundary_fails():
    # alpha = 2 exactly: an estimate cannot settle which side of the
    # diffusive boundary we are on, so it must refuse
    model = presets.driftless(2.5, 1.0)
    f = presets.driftless_observable(1.0)
    with pytest.raises(ClassificationFailed, match="boundary"):
        classify_regime(model, f)


def test_classify_estimated_near_one_warns():
    rep = classify_regime(presets.kinetic(2.0), f_id)
    assert any("critical value 1" in w for w in rep.tail_diagnostics["warnings"])
    assert rep.regime in ("Levy", "CriticalLevy")
    assert rep.alpha == pytest.approx(1.0, abs=0.02)


def test_classify_zero_f_fails(kinetic3):
    with pytest.raises(ClassificationFailed):
        classify_regime(kinetic3, lambda x: np.zeros_like(np.asarray(x, float)))


def test_classify_wrong_claim_fails(kinetic3):
    alpha, fp, fm = presets.kinetic_tail_limits(3.0)
    with pytest.raises(ClassificationFailed):
        classify_regime(kinetic3, f_id, claimed=(alpha, None, 1.2 * fp, fm))
    with pytest.raises(ClassificationFailed):
        classify_regime(kinetic3, f_id, claimed=(alpha / 2.0, None, fp, fm))


def test_classify_nonpositive_alpha():
    with pytest.raises(InvalidAlpha):
        classify_regime(presets.kinetic(3.0), f_id, claimed=(-1.0, None, 1.0, 1.0))


# ---------------------------------------------------------------------------
# diffusive limit law and the Poisson cross-check

def test_limit_law_diffusive_kinetic7(kinetic7):
    # T(x) = (1+x^2)^{-5/2}/5 in closed form, so
    # sigma^2 = 4 kappa int s' T^2 = (4 * 15/16) * 2/25 = 3/10 exactly
    alpha, fp, fm = presets.kinetic_tail_limits(7.0)
    rep = classify_regime(kinetic7, f_id, claimed=(alpha, None, fp, fm))
    assert rep.regime == "Diffusive"
    law = limit_law(rep, kinetic7, f_id)
    assert law.sigma_alpha**2 == pytest.approx(0.3, rel=1e-6)
    assert law.kappa == pytest.approx(15.0 / 16.0, rel=1e-9)
    assert law.lambda_alpha is None
    np.testing.assert_allclose(law.z_of_xi(np.array([-2.0, 0.3])), 1.0)
    xi = np.linspace(-4.0, 4.0, 9)
    np.testing.assert_allclose(
        char_exponent(law, xi, 2.0),
        np.exp(-2.0 * law.sigma_alpha**2 * xi**2 / 2.0), rtol=1e-12)


def test_poisson_kinetic7_matches_direct_route(kinetic7):
    alpha, fp, fm = presets.kinetic_tail_limits(7.0)
    law = limit_law(classify_regime(kinetic7, f_id, claimed=(alpha, None, fp, fm)),
                    kinetic7, f_id)
    sol = poisson_solution(kinetic7, f_id)
    assert sol.gamma_sq == pytest.approx(law.sigma_alpha**2, rel=1e-6)
    assert sol.gamma_sq == pytest.approx(0.3, rel=1e-6)
    # g'(x) = (2/5)(1+x^2) in closed form
    for x in (-3.0, -0.4, 0.0, 1.0, 7.5):
        assert sol.g_prime(x) == pytest.approx(0.4 * (1.0 + x * x), rel=1e-5)


def test_poisson_residual_invariant(kinetic7):
    # 2 b g' + sigma^2 g'' + 2 f = 0, with g'' by central differences
    sol = poisson_solution(kinetic7, f_id)
    h = 0.05
    for x in np.linspace(-5.0, 5.0, 11):
        g2 = (sol.g_prime(x + h) - sol.g_prime(x - h)) / (2.0 * h)
        b = float(kinetic7.drift(np.asarray([x]))[0])
        resid = 2.0 * b * sol.g_prime(x) + g2 + 2.0 * x
        assert abs(resid) < 1e-3 * (1.0 + 2.0 * abs(x))


def test_poisson_heavy_identity(heavy1):
    # for b = -x, sigma = 1, f = x: T(x) = e^{-x^2}/2 and s' = e^{x^2},
    # so g' = 1 everywhere and gamma^2 = mu(1) = 1
    sol = poisson_solution(heavy1, f_id)
    assert sol.gamma_sq == pytest.approx(1.0, rel=1e-8)
    for x in (-10.0, -1.3, 0.0, 0.7, 10.0):
        assert sol.g_prime(x) == pytest.approx(1.0, rel=1e-8)
        assert sol.g(x) == pytest.approx(x, rel=1e-7, abs=1e-9)


def test_poisson_zero_f(heavy1):
    sol = poisson_solution(heavy1, lambda x: np.zeros_like(np.asarray(x, float)))
    assert sol.gamma_sq == 0.0
    assert sol.g(1.3) == 0.0
    assert sol.g_prime(-0.2) == 0.0


def test_poisson_uncentered_raises(heavy1):
    with pytest.raises(NotCentered):
        poisson_solution(heavy1, lambda x: np.asarray(x, float) ** 2)


def test_poisson_divergent_raises(kinetic3):
    with pytest.raises(PoissonUnavailable):
        poisson_solution(kinetic3, lambda x: np.asarray(x, float) ** 2)


def test_limit_law_rejects_uncentered(kinetic7):
    alpha, fp, fm = presets.kinetic_tail_limits(7.0)
    shifted = lambda x: np.asarray(x, float) + 0.3
    rep = classify_regime(kinetic7, shifted, claimed=(alpha, None, fp, fm))
    with pytest.raises(NotCentered):
        limit_law(rep, kinetic7, shifted)


# ---------------------------------------------------------------------------
# critical diffusive limit law

def test_critical_diffusive_unit_case():
    # kappa = 1 (b = -sgn x, sigma = 1) with f built to have tail limits
    # f_+- = 1: sigma_2^2 = 4 kappa (f_+^2 + f_-^2) = 8
    model = DiffusionModel(
        drift=lambda x: -np.sign(np.asarray(x, float)),
        diffusion=lambda x: np.ones_like(np.asarray(x, float)),
        domain_cutoff=80.0, name="two-sided-exp")
    ss = model.scale_speed()
    assert ss.kappa == pytest.approx(1.0, rel=1e-10)

    def f_raw(x):
        x = np.asarray(x, dtype=np.float64)
        s_abs = np.abs(ss.scale(x))
        with np.errstate(over="ignore"):
            out = ss.scale_deriv(x) ** 2 * np.where(s_abs > 0, s_abs, 1.0) ** -1.5
        out[np.abs(x) < 1.0] = ss.scale_deriv(1.0) ** 2 * abs(ss.scale(1.0)) ** -1.5
        return out

    mu_f = invariant_integral(model, f_raw)
    f_c = lambda x: f_raw(x) - mu_f
    rep = classify_regime(model, f_c, claimed=(2.0, None, 1.0, 1.0))
    assert rep.regime == "CriticalDiffusive"
    law = limit_law(rep, model, f_c)
    assert law.sigma_alpha**2 == pytest.approx(8.0, rel=1e-9)
    assert math.isinf(law.rho)


def test_critical_diffusive_presets():
    model = presets.driftless(2.5, 1.0)
    f = presets.driftless_observable(1.0)
    law = limit_law(classify_regime(model, f, claimed=(2.0, None, 1.0, -1.0)), model, f)
    # 4 * (3/4) * (1 + 1) = 6
    assert law.sigma_alpha**2 == pytest.approx(6.0, rel=1e-7)

    m5 = presets.kinetic(5.0)
    a5, fp5, fm5 = presets.kinetic_tail_limits(5.0)
    law5 = limit_law(classify_regime(m5, f_id, claimed=(a5, None, fp5, fm5)), m5, f_id)
    assert law5.regime == "CriticalDiffusive"
    # 4 * (3/4) * 2 * 6^{-3} = 1/36
    assert law5.sigma_alpha**2 == pytest.approx(1.0 / 36.0, rel=1e-7)


# ---------------------------------------------------------------------------
# stable limit laws

def test_levy_law_symmetric_kinetic3(kinetic3):
    alpha, fp, fm = presets.kinetic_tail_limits(3.0)
    law = limit_law(classify_regime(kinetic3, f_id, claimed=(alpha, None, fp, fm)),
                    kinetic3, f_id)
    assert law.beta_f == 0.0
    np.testing.assert_allclose(law.z_of_xi(np.array([-5.0, 0.1, 2.0])), 1.0)
    assert law.levy_c_plus == pytest.approx(law.levy_c_minus, rel=1e-14)
    assert law.sigma_alpha**alpha == pytest.approx(
        law.lambda_alpha * 2.0 * abs(fp) ** alpha, rel=1e-12)
    assert law.generator_drift_a is None


def test_levy_law_asymmetric_z_symmetry():
    model = presets.kinetic(3.0, 1.0, 0.25)
    alpha, fp, fm = presets.kinetic_tail_limits(3.0, 1.0, 0.25)
    # the skewed invariant law leaves f = x uncentered; subtracting the mean
    # adds a 1/x transient to the tail ratio, hence the wider trend_tol
    mu_id = invariant_integral(model, f_id)
    f_c = lambda x: np.asarray(x, dtype=np.float64) - mu_id
    law = limit_law(classify_regime(model, f_c, claimed=(alpha, None, fp, fm),
                                    trend_tol=0.05),
                    model, f_c)
    assert law.beta_f != 0.0
    xi = np.array([0.03, 0.7, 4.0, 55.0])
    z = law.z_of_xi(xi)
    np.testing.assert_allclose(z.real, 1.0)  # exactly
    np.testing.assert_allclose(law.z_of_xi(-xi), np.conj(z), rtol=0, atol=0)
    cf = char_exponent(law, np.concatenate([-xi, xi]), 1.3)
    assert np.all(np.abs(cf) <= 1.0 + 1e-12)


def test_levy_triplet_consistency():
    # c_+ + c_- = lambda_alpha (|f_+|^alpha + |f_-|^alpha) over random pairs
    rng = np.random.default_rng(20260814)
    model = presets.kinetic(3.0)
    kappa = compute_kappa(model)
    for _ in range(100):
        alpha = float(rng.uniform(0.05, 1.95))
        if abs(alpha - 1.0) < 1e-3:
            alpha = 1.0
        f_p, f_m = rng.uniform(-3.0, 3.0, size=2)
        if abs(f_p) + abs(f_m) < 1e-3:
            f_p = 1.0
        regime = "CriticalLevy" if alpha == 1.0 else "Levy"
        rep = RegimeReport(alpha=alpha, ell=ell_one, f_plus=float(f_p),
                           f_minus=float(f_m), regime=regime, f_in_L1mu=False,
                           tail_diagnostics={})
        law = limit_law(rep, model, f_id)
        total = law.lambda_alpha * (abs(f_p) ** alpha + abs(f_m) ** alpha)
        assert law.levy_c_plus + law.levy_c_minus == pytest.approx(total, rel=1e-12)
        assert law.levy_c_plus >= 0.0 and law.levy_c_minus >= 0.0
        assert law.sigma_alpha**alpha == pytest.approx(total, rel=1e-10)
        assert abs(law.beta_f) <= 1.0 + 1e-15


def test_critical_levy_law_fields():
    model = presets.kinetic(2.0, 1.0, 0.25)
    alpha, fp, fm = presets.kinetic_tail_limits(2.0, 1.0, 0.25)
    rep = classify_regime(model, f_id, claimed=(alpha, None, fp, fm))
    assert rep.regime == "CriticalLevy"
    assert not rep.f_in_L1mu  # ell = 1 makes int dx/(x ell) diverge
    law = limit_law(rep, model, f_id)
    assert law.sigma_alpha == pytest.approx(
        law.kappa * (math.pi / 2.0) * (abs(fp) + abs(fm)), rel=1e-12)
    assert law.generator_drift_a is not None and math.isfinite(law.generator_drift_a)
    z = law.z_of_xi(np.array([0.4, 2.0]))
    np.testing.assert_allclose(z.real, 1.0)
    np.testing.assert_allclose(law.z_of_xi(np.array([-0.4, -2.0])), np.conj(z))
    # with ell = 1 and f not mu-integrable, zeta_eps = log(1/eps) exactly
    assert law.zeta_eps(1e-3) == pytest.approx(math.log(1e3), rel=1e-10)


def test_xi_eps_exact_vs_asymptotic():
    # the exact centering over the asymptotic kappa (f_+ + f_-) ell zeta_eps
    # approaches 1 monotonically
    model = presets.kinetic(2.0, 1.0, 0.25)
    alpha, fp, fm = presets.kinetic_tail_limits(2.0, 1.0, 0.25)
    law = limit_law(classify_regime(model, f_id, claimed=(alpha, None, fp, fm)),
                    model, f_id)
    devs = []
    for k in range(2, 7):
        eps = 10.0**-k
        ratio = law.xi_eps(eps) / (law.kappa * (fp + fm) * law.zeta_eps(eps))
        devs.append(abs(ratio - 1.0))
    assert all(a > b for a, b in zip(devs, devs[1:]))
    assert devs[-1] < 0.01
    np.testing.assert_allclose(
        devs, [0.0160, 0.0032, 0.0011, 0.0007, 0.0005], atol=2e-4)


def test_symmetric_critical_levy_centering_note(heavy1):
    # f_+ + f_- = 0 at alpha = 1: z_1 = 1 identically
    rep = RegimeReport(alpha=1.0, ell=ell_one, f_plus=0.8, f_minus=-0.8,
                       regime="CriticalLevy", f_in_L1mu=False, tail_diagnostics={})
    law = limit_law(rep, heavy1, f_id)
    np.testing.assert_allclose(law.z_of_xi(np.array([-9.0, 0.2, 3.0])), 1.0)
    assert any("symmetric" in n for n in law.notes)


# ---------------------------------------------------------------------------
# regime gating and serialization

def test_eps_quantities_regime_gating(kinetic7, kinetic3):
    a7 = presets.kinetic_tail_limits(7.0)
    law7 = limit_law(classify_regime(kinetic7, f_id, claimed=(a7[0], None, a7[1], a7[2])),
                     kinetic7, f_id)
    with pytest.raises(InvalidRequest):
        law7.xi_eps(1e-3)
    with pytest.raises(InvalidRequest):
        law7.zeta_eps(1e-3)
    assert law7.rho_eps(math.exp(-1.0)) == pytest.approx(4.0, rel=1e-9)

    a3 = presets.kinetic_tail_limits(3.0)
    law3 = limit_law(classify_regime(kinetic3, f_id, claimed=(a3[0], None, a3[1], a3[2])),
                     kinetic3, f_id)
    with pytest.raises(InvalidRequest):
        law3.rho_eps(0.1)
    with pytest.raises(InvalidRequest):
        law3.xi_eps(0.1)


def test_limit_law_serialization_round_trip(kinetic7):
    cases = []
    a7 = presets.kinetic_tail_limits(7.0)
    cases.append(limit_law(
        classify_regime(kinetic7, f_id, claimed=(a7[0], None, a7[1], a7[2])),
        kinetic7, f_id))
    m2 = presets.kinetic(2.0, 1.0, 0.25)
    a2 = presets.kinetic_tail_limits(2.0, 1.0, 0.25)
    cases.append(limit_law(
        classify_regime(m2, f_id, claimed=(a2[0], None, a2[1], a2[2])), m2, f_id))
    m5 = presets.kinetic(5.0)
    a5 = presets.kinetic_tail_limits(5.0)
    cases.append(limit_law(
        classify_regime(m5, f_id, claimed=(a5[0], None, a5[1], a5[2])), m5, f_id))

    xi = np.array([-7.0, -0.2, 0.0, 0.9, 12.0])
    for law in cases:
        blob = json.dumps(law.to_json(), allow_nan=False)  # must be strict-JSON safe
        back = LimitLaw.from_json(json.loads(blob))
        assert back.regime == law.regime
        assert back.sigma_alpha == law.sigma_alpha
        np.testing.assert_array_equal(
            char_exponent(back, xi, 0.8), char_exponent(law, xi, 0.8))
        with pytest.raises(InvalidRequest):
            back.rho_eps(0.1) if law.regime.endswith("Diffusive") else back.xi_eps(0.1)


def test_from_json_rejects_unknown_schema():
    with pytest.raises(InvalidRequest):
        LimitLaw.from_json({"schema": 99})


def test_char_exponent_basics(kinetic3):
    a3 = presets.kinetic_tail_limits(3.0)
    law = limit_law(classify_regime(kinetic3, f_id, claimed=(a3[0], None, a3[1], a3[2])),
                    kinetic3, f_id)
    assert char_exponent(law, 0.0, 5.0) == 1.0 + 0.0j
    assert char_exponent(law, 1.3, 0.0) == 1.0 + 0.0j
    with pytest.raises(InvalidRequest):
        char_exponent(law, 1.0, -1.0)


@settings(max_examples=60, deadline=None)
@given(xi=st.floats(min_value=-1e3, max_value=1e3, allow_nan=False),
       t=st.floats(min_value=0.0, max_value=50.0, allow_nan=False))
def test_cf_modulus_bounded_property(xi, t):
    law = LimitLaw(regime="CriticalLevy", alpha=1.0, sigma_alpha=0.7, kappa=0.5,
                   f_plus=1.0, f_minus=0.25, beta_f=0.6, lambda_alpha=0.25 * math.pi,
                   levy_c_plus=0.25 * math.pi, levy_c_minus=0.0,
                   _z1=(1.25, 0.25 * math.log(0.25), 1.25))
    z = law.z_of_xi(xi)
    assert z.real == 1.0
    assert law.z_of_xi(-xi) == np.conj(z)
    assert abs(char_exponent(law, xi, t)) <= 1.0 + 1e-12
