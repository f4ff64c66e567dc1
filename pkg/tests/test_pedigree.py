"""Both samplers against the analytic moments and against each other."""

import numpy as np
import pandas as pd
import pytest

from multigen.models import ModelError, ModelParams, Variant
from multigen.moments import (
    direct_am_moments,
    family_am_moments,
    lf_moments,
    simplified_bt_coeffs,
)
from multigen.pedigree import (
    CHAIN_MEMBERS,
    MEMBERS,
    BadScenarioParamsError,
    NotPSDError,
    PedigreeCovariance,
    build_pedigree_covariance,
    plant_scenario,
    sample_pedigrees,
    simulate_chain_outcomes,
    simulate_dynasties,
    simulate_marriage_market,
)
from multigen.regression import RegressionSpec, build_spec, fit

LF = ModelParams(Variant.LATENT_FACTOR, 0.0, 0.66, 0.84, normalize_y=True)
DIRECT = ModelParams(Variant.LF_DIRECT_AM, 0.0, 0.8, 0.9, m=0.5, normalize_y=True)
FAMILY = ModelParams(Variant.LF_FAMILY_AM, 0.0, 0.8, 0.9, m=0.5, normalize_y=True)


def _corr(df, a, b):
    pair = df[[a, b]].dropna()
    return float(np.corrcoef(pair[a], pair[b])[0, 1])


class TestPedigreeCovariance:
    def test_chain_covariance_matches_analytic_betas(self):
        cov = build_pedigree_covariance(LF)
        assert cov.member_labels == CHAIN_MEMBERS
        ms = lf_moments(0.84, 0.66)
        vy = cov.cov_y[0, 0]
        assert cov.cov_y[0, 2] / vy == pytest.approx(0.3074, abs=5e-5)
        assert cov.cov_y[0, 1] / vy == pytest.approx(ms.beta_k[1], abs=1e-12)

    def test_direct_spousal_entry(self):
        cov = build_pedigree_covariance(DIRECT)
        i = dict(zip(MEMBERS, range(7)))
        assert cov.cov_e[i["father"], i["mother"]] == pytest.approx(0.5)
        assert cov.cov_e[i["child"], i["father"]] == pytest.approx(0.6)

    def test_family_spousal_entry(self):
        cov = build_pedigree_covariance(FAMILY)
        i = dict(zip(MEMBERS, range(7)))
        assert cov.cov_e[i["father"], i["mother"]] == pytest.approx(0.25)
        lam_i = family_am_moments(0.8, 0.5, 0.9).lambda_eff
        assert cov.cov_e[i["child"], i["mother"]] == pytest.approx(lam_i)
        # the chooser projection itself
        assert cov.cov_e[i["father"], i["mat_gm"]] == pytest.approx(0.5)

    def test_same_lineage_gp_entry_consistent_with_beta2(self):
        cov = build_pedigree_covariance(DIRECT)
        i = dict(zip(MEMBERS, range(7)))
        ms = direct_am_moments(0.8, 0.5, 0.9)
        assert cov.cov_e[i["child"], i["pat_gf"]] == pytest.approx(
            ms.beta_k[2] / 0.9**2, abs=1e-12
        )

    @pytest.mark.parametrize("m", [0.0, 0.3, 0.7, 1.0])
    @pytest.mark.parametrize("lt", [0.2, 0.6, 1.0])
    @pytest.mark.parametrize("variant", [Variant.LF_DIRECT_AM, Variant.LF_FAMILY_AM])
    def test_psd_over_grid(self, m, lt, variant):
        p = ModelParams(variant, 0.0, lt, 0.9, m=m, normalize_y=True)
        cov = build_pedigree_covariance(p)
        assert np.linalg.eigvalsh(cov.cov_e).min() > -1e-10

    def test_not_psd_reported(self):
        bad = np.eye(3)
        bad[0, 1] = bad[1, 0] = 0.9
        bad[1, 2] = bad[2, 1] = 0.9
        bad[0, 2] = bad[2, 0] = -0.9
        with pytest.raises(NotPSDError):
            PedigreeCovariance(("a", "b", "c"), bad, bad.copy())


class TestExactSampler:
    def test_deterministic_given_seed(self):
        a = sample_pedigrees(build_pedigree_covariance(DIRECT), DIRECT, 500, seed=9)
        b = sample_pedigrees(build_pedigree_covariance(DIRECT), DIRECT, 500, seed=9)
        pd.testing.assert_frame_equal(a, b)

    def test_chain_correlations(self):
        df = sample_pedigrees(build_pedigree_covariance(LF), LF, 100_000, seed=10)
        assert _corr(df, "y_child", "y_father") == pytest.approx(0.4657, abs=0.01)
        assert _corr(df, "y_child", "y_pat_gf") == pytest.approx(0.3074, abs=0.01)

    def test_family_am_spousal_correlation(self):
        df = sample_pedigrees(build_pedigree_covariance(FAMILY), FAMILY, 100_000, seed=11)
        assert _corr(df, "e_father", "e_mother") == pytest.approx(0.25, abs=0.01)

    def test_m_one_boundary_samples(self):
        p = ModelParams(Variant.LF_DIRECT_AM, 0.0, 0.8, 0.9, m=1.0, normalize_y=True)
        df = sample_pedigrees(build_pedigree_covariance(p), p, 20_000, seed=12)
        assert _corr(df, "e_father", "e_mother") == pytest.approx(1.0, abs=1e-6)

    def test_rejects_nonpositive_n(self):
        with pytest.raises(ModelError):
            sample_pedigrees(build_pedigree_covariance(LF), LF, 0, seed=1)


class TestDynastySimulator:
    def test_simplified_bt_ols_recovery(self):
        p = ModelParams(Variant.SIMPLIFIED_BT, 0.2, 0.5, 0.8)
        df = simulate_dynasties(p, 100_000, seed=1)
        res = fit(build_spec("multigen_chain"), df)
        bp, bgp = simplified_bt_coeffs(0.2, 0.5)
        assert res.coefficients["y_father"] == pytest.approx(bp, abs=0.005)
        assert res.coefficients["y_pat_gf"] == pytest.approx(bgp, abs=0.005)

    def test_normalized_bt_unit_variance(self):
        p = ModelParams(Variant.ORIGINAL_BT, 0.33, 0.33, 0.84, normalize_y=True)
        df = simulate_dynasties(p, 100_000, seed=22)
        assert df["y_child"].var(ddof=1) == pytest.approx(1.0, abs=0.01)

    def test_endowment_variance_stationary(self):
        df = simulate_dynasties(LF, 100_000, seed=23)
        assert 0.97 <= df["e_child"].var(ddof=1) <= 1.03

    def test_absent_lineage_marked_missing(self):
        df = simulate_dynasties(LF, 100, seed=24)
        assert df["y_mother"].isna().all()
        assert df["y_mat_gf"].isna().all()

    def test_beta3_from_longer_chain(self):
        y = simulate_chain_outcomes(LF, 200_000, n_keep=4, seed=25)
        anc, last = y[:, 0], y[:, -1]
        b3 = np.cov(last, anc, ddof=1)[0, 1] / np.var(anc, ddof=1)
        target = lf_moments(0.84, 0.66).beta_k[3]
        se = 1.0 / np.sqrt(len(last))
        assert abs(b3 - target) < 3 * se + 1e-3

    def test_am_variant_rejected(self):
        with pytest.raises(ModelError):
            simulate_dynasties(DIRECT, 100, seed=1)


class TestMarriageMarket:
    def test_direct_realized_spousal_correlation(self):
        df = simulate_marriage_market(DIRECT, 50_000, generations=10,
                                      matching="Direct", seed=31)
        assert _corr(df, "e_father", "e_mother") == pytest.approx(0.50, abs=0.01)

    def test_family_based_projection_and_emergent_correlation(self):
        df = simulate_marriage_market(FAMILY, 50_000, generations=12,
                                      matching="FamilyBased", seed=32)
        # the matching target: husband on the choosing mother-in-law
        assert _corr(df, "e_father", "e_mat_gm") == pytest.approx(0.50, abs=0.02)
        # the emergent spousal correlation, never targeted directly
        assert _corr(df, "e_father", "e_mother") == pytest.approx(0.25, abs=0.015)

    def test_random_matching_at_m_zero(self):
        p = ModelParams(Variant.LF_DIRECT_AM, 0.0, 0.8, 0.9, m=0.0, normalize_y=True)
        df = simulate_marriage_market(p, 20_000, generations=6,
                                      matching="Direct", seed=33)
        assert abs(_corr(df, "e_father", "e_mother")) < 3.0 / np.sqrt(20_000)

    def test_variant_matching_mismatch(self):
        with pytest.raises(ModelError, match="matching"):
            simulate_marriage_market(DIRECT, 2_000, matching="FamilyBased", seed=1)

    def test_small_population_rejected(self):
        with pytest.raises(ModelError, match="1000"):
            simulate_marriage_market(DIRECT, 500, matching="Direct", seed=1)

    def test_deterministic_given_seed(self):
        a = simulate_marriage_market(DIRECT, 2_000, generations=4,
                                     matching="Direct", seed=5)
        b = simulate_marriage_market(DIRECT, 2_000, generations=4,
                                     matching="Direct", seed=5)
        pd.testing.assert_frame_equal(a, b)

    @pytest.mark.parametrize("p,matching,oracle", [
        (DIRECT, "Direct", direct_am_moments(0.8, 0.5, 0.9)),
        (FAMILY, "FamilyBased", family_am_moments(0.8, 0.5, 0.9)),
    ])
    def test_market_agrees_with_exact_sampler(self, p, matching, oracle):
        n = 50_000
        mkt = simulate_marriage_market(p, n, generations=12, matching=matching, seed=34)
        ref = sample_pedigrees(build_pedigree_covariance(p), p, n, seed=35)
        se = 2.0 / np.sqrt(n)  # conservative bound for a correlation
        for a, b in [("y_child", "y_father"), ("y_child", "y_pat_gf"),
                     ("y_father", "y_mother")]:
            assert abs(_corr(mkt, a, b) - _corr(ref, a, b)) < 3 * np.hypot(se, se)


class TestScenarios:
    def test_crisis_exposure_standardized(self):
        base = sample_pedigrees(build_pedigree_covariance(DIRECT), DIRECT, 5_000, seed=41)
        betas = {f"beta{i}": 0.1 for i in range(1, 10)}
        out = plant_scenario(base, "CrisisDiD", betas, seed=42)
        assert out["crisis"].mean() == pytest.approx(0.0, abs=1e-12)
        assert out["crisis"].std(ddof=1) == pytest.approx(1.0, abs=1e-12)
        assert set(out["post"].unique()) <= {True, False}

    def test_crisis_planted_coefficients_recovered(self):
        base = sample_pedigrees(build_pedigree_covariance(DIRECT), DIRECT, 50_000, seed=43)
        betas = {f"beta{i}": b for i, b in enumerate(
            [0.5, 0.1, 0.05, -0.02, 0.03, 0.01, 0.02, -0.05, 0.04], start=1)}
        out = plant_scenario(base, "CrisisDiD", {**betas, "noise_sd": 0.5}, seed=44)
        res = fit(build_spec("crisis_did"), out)
        b8 = res.coefficients["y_gp_avg:post:crisis"]
        lo, hi = res.conf_int("y_gp_avg:post:crisis")
        assert lo <= -0.05 <= hi
        assert b8 == pytest.approx(-0.05, abs=0.02)

    def test_crisis_rejects_chain_records(self):
        df = simulate_dynasties(LF, 1_000, seed=45)
        with pytest.raises(BadScenarioParamsError):
            plant_scenario(df, "CrisisDiD", {f"beta{i}": 0.0 for i in range(1, 10)},
                           seed=46)

    def test_family_choice_interaction_positive(self):
        # family-based matching at 0.7 vs direct at 0.2: the population gap
        # in the grandparent-average coefficient is about +0.04
        base = sample_pedigrees(build_pedigree_covariance(DIRECT), DIRECT, 80_000, seed=47)
        out = plant_scenario(base, "FamilyChoiceSplit", {
            "lambda_tilde": 0.8, "m_family": 0.7, "m_direct": 0.2, "rho": 0.9,
        }, seed=48)
        res = fit(build_spec("interaction_family_choice"), out)
        assert res.coefficients["y_gp_avg:family_choice"] > 0.02

    def test_unknown_scenario(self):
        base = sample_pedigrees(build_pedigree_covariance(DIRECT), DIRECT, 10, seed=1)
        with pytest.raises(BadScenarioParamsError):
            plant_scenario(base, "Nope", {}, seed=1)

    def test_bad_share(self):
        base = sample_pedigrees(build_pedigree_covariance(DIRECT), DIRECT, 10, seed=1)
        with pytest.raises(BadScenarioParamsError):
            plant_scenario(base, "FamilyChoiceSplit", {
                "lambda_tilde": 0.8, "m_family": 0.5, "m_direct": 0.2,
                "rho": 0.9, "share": 1.5,
            }, seed=1)
