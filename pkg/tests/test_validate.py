"""ECF machinery, the CF-decay index estimator, KS testing, and reports."""

import json
import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from stablediff._rng import TAG_CMS, stream
from stablediff.errors import InvalidRequest, WindowNotFound
from stablediff.stable import StableSpec, sample_limit_law, sample_stable_cf
from stablediff.validate import (
    cf_distance,
    default_xi_grid,
    empirical_cf,
    estimate_alpha,
    ks_two_sample,
    validate_against_law,
)


def normals(n, seed=0):
    return stream(seed, TAG_CMS, 0).standard_normal(n)


# ---------------------------------------------------------------------------
# empirical characteristic function

def test_ecf_point_mass_at_zero():
    ecf = empirical_cf(np.zeros(200), np.array([0.5, 1.0, 3.0]))
    np.testing.assert_array_equal(ecf.values, 1.0 + 0.0j)
    np.testing.assert_array_equal(ecf.se, 0.0)
    assert ecf.n == 200


def test_ecf_two_point_law_is_cosine():
    x = np.array([1.0, -1.0] * 100)
    xi = np.array([0.5, 2.0])
    ecf = empirical_cf(x, xi)
    np.testing.assert_allclose(ecf.values, np.cos(xi), rtol=0, atol=1e-14)
    # the real part is constant across samples, the imaginary part is +-sin(xi)
    np.testing.assert_allclose(ecf.se_re, 0.0, rtol=0, atol=1e-14)
    np.testing.assert_allclose(ecf.se_im, np.abs(np.sin(xi)) / math.sqrt(199.0),
                               rtol=1e-10)


def test_ecf_rejects_small_sample():
    with pytest.raises(InvalidRequest):
        empirical_cf(np.zeros(99), np.array([1.0]))


# ---------------------------------------------------------------------------
# index estimation from the ECF decay

def test_alpha_hat_gaussian():
    est = estimate_alpha(normals(4000), seed=1)
    assert est.alpha_hat == pytest.approx(2.0, abs=0.1)
    assert est.ci[0] <= 2.0 <= est.ci[1]
    assert est.n_window >= 8
    assert est.xi_window[0] < est.xi_window[1]


def test_alpha_hat_stable_four_thirds():
    x = sample_stable_cf(StableSpec(4.0 / 3.0, 1.0, -1.0), 1.0, 4000, seed=5)
    est = estimate_alpha(x, seed=1)
    assert est.alpha_hat == pytest.approx(4.0 / 3.0, abs=0.1)
    assert est.ci[0] <= 4.0 / 3.0 <= est.ci[1]


def test_alpha_hat_scale_equivariant():
    # the window is rescaled by the sample median, so a pure dilation moves
    # only the regression intercept
    x = sample_stable_cf(StableSpec(4.0 / 3.0, 1.0, -1.0), 1.0, 4000, seed=5)
    a1 = estimate_alpha(x, seed=1)
    a4 = estimate_alpha(4.0 * x, seed=1)
    assert a4.alpha_hat == pytest.approx(a1.alpha_hat, abs=1e-12)
    assert a4.n_window == a1.n_window


def test_alpha_hat_no_window():
    with pytest.raises(WindowNotFound):
        estimate_alpha(np.full(600, 5.0))
    with pytest.raises(WindowNotFound):
        estimate_alpha(np.zeros(600))


def test_alpha_hat_rejects_small_sample():
    with pytest.raises(InvalidRequest):
        estimate_alpha(normals(499))


# ---------------------------------------------------------------------------
# CF distance and the KS test

def test_cf_distance_self_is_zero():
    ecf = empirical_cf(normals(500), np.array([0.3, 1.0]))
    sup, n_out = cf_distance(ecf, ecf.values)
    assert sup == 0.0 and n_out == 0


def test_cf_distance_detects_wrong_target():
    ecf = empirical_cf(normals(4000), np.array([0.3, 1.0]))
    sup, n_out = cf_distance(ecf, np.ones(2, dtype=complex))
    # at xi = 1 the gap to a flat target is 1 - e^{-1/2}
    assert sup == pytest.approx(1.0 - math.exp(-0.5), abs=0.02)
    assert n_out == 2


def test_cf_distance_rejects_misaligned_grids():
    ecf = empirical_cf(normals(500), np.array([0.3, 1.0]))
    with pytest.raises(InvalidRequest):
        cf_distance(ecf, np.ones(3, dtype=complex))


def test_ks_matches_reference_implementation():
    a = normals(700, seed=1)
    b = normals(900, seed=2) + 0.05
    stat, crit = ks_two_sample(a, b)
    assert stat == pytest.approx(ks_2samp(a, b).statistic, abs=1e-15)
    assert crit == pytest.approx(1.6277 * math.sqrt((700 + 900) / (700 * 900)),
                                 rel=1e-12)
    assert ks_two_sample(b, a)[0] == stat


def test_ks_verdicts():
    a = normals(800, seed=3)
    assert ks_two_sample(a, a)[0] == 0.0
    stat, crit = ks_two_sample(a, normals(800, seed=4) + 5.0)
    assert stat > crit
    with pytest.raises(InvalidRequest):
        ks_two_sample(a, normals(99))


# ---------------------------------------------------------------------------
# validation reports

def test_default_xi_grid(law_levy):
    xi = default_xi_grid(law_levy)
    assert xi.shape == (21,)
    assert xi[0] == pytest.approx(0.05 / law_levy.sigma_alpha, rel=1e-12)
    assert xi[-1] == pytest.approx(20.0 / law_levy.sigma_alpha, rel=1e-12)
    assert np.all(np.diff(xi) > 0)


def test_validate_levy_samples_pass(law_levy):
    x = sample_limit_law(law_levy, 1.0, 4000, seed=3)
    ref = sample_limit_law(law_levy, 1.0, 4000, seed=4)
    report = validate_against_law(x, law_levy, 1.0, reference_samples=ref)
    assert report.verdict == {"cf_band": True, "alpha_hat": True, "ks": True}
    assert report.passed
    assert report.sup_gap < 0.05
    assert report.alpha_hat.alpha_hat == pytest.approx(4.0 / 3.0, abs=0.15)
    assert report.ks_stats[0][0] == "samples-vs-reference"


def test_validate_diffusive_uses_effective_index(law_diffusive):
    # the tail index is 8/3 but the limit is Gaussian; the decay estimate
    # must be compared against 2
    x = sample_limit_law(law_diffusive, 1.0, 4000, seed=3)
    report = validate_against_law(x, law_diffusive, 1.0)
    assert report.passed
    assert report.alpha_hat.alpha_hat == pytest.approx(2.0, abs=0.15)


def test_validate_detects_wrong_scale(law_levy):
    x = 1.5 * sample_limit_law(law_levy, 1.0, 4000, seed=3)
    report = validate_against_law(x, law_levy, 1.0)
    assert not report.verdict["cf_band"]
    assert not report.passed


def test_validate_small_sample_skips_index(law_diffusive):
    # 100 <= n < 500: the CF band still runs, the index estimate is recorded
    # as unavailable rather than failing the report
    x = sample_limit_law(law_diffusive, 1.0, 300, seed=6)
    report = validate_against_law(x, law_diffusive, 1.0)
    assert report.alpha_hat is None
    assert "alpha_hat" not in report.verdict
    assert report.verdict["cf_band"]


def test_report_serialization_roundtrip(tmp_path, law_levy):
    x = sample_limit_law(law_levy, 1.0, 4000, seed=3)
    ref = sample_limit_law(law_levy, 1.0, 4000, seed=4)
    report = validate_against_law(x, law_levy, 1.0, reference_samples=ref)

    payload = report.to_json()
    assert payload["schema"] == 1
    assert payload["passed"] is True
    assert json.loads(json.dumps(payload)) == payload

    json_path = tmp_path / "report.json"
    report.write_json(json_path)
    assert json.loads(json_path.read_text()) == payload

    csv_path = tmp_path / "report.csv"
    report.write_plot_csv(csv_path)
    rows = csv_path.read_text().strip().split("\n")
    assert rows[0] == "xi,ecf_re,ecf_im,se,target_re,target_im"
    assert len(rows) == report.xi_grid.size + 1
    # repr round-trip keeps the grid exact
    assert float(rows[1].split(",")[0]) == report.xi_grid[0]
