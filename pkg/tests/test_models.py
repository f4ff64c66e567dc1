"""Parameter validation and steady-state variance algebra."""

import numpy as np
import pytest

from multigen.models import (
    InfeasibleSigmaError,
    ModelError,
    ModelParams,
    NonStationaryError,
    Variant,
    solve_sigma2_for_unit_var,
    steady_state,
    steady_state_var_y,
)


def _chain(variant, gamma, lam, rho, **kw):
    return ModelParams(variant, gamma, lam, rho, **kw)


class TestValidation:
    def test_m_rejected_for_chain_variants(self):
        with pytest.raises(ModelError, match="m="):
            _chain(Variant.LATENT_FACTOR, 0.0, 0.5, 0.8, m=0.3)

    def test_gamma_rejected_for_latent_factor(self):
        with pytest.raises(ModelError, match="gamma"):
            _chain(Variant.LATENT_FACTOR, 0.2, 0.5, 0.8)

    def test_gamma_rejected_for_am_variants(self):
        with pytest.raises(ModelError, match="gamma"):
            ModelParams(Variant.LF_DIRECT_AM, 0.1, 0.5, 0.8, m=0.3)

    def test_simplified_bt_rejects_noise(self):
        with pytest.raises(ModelError, match="sigma2_u"):
            _chain(Variant.SIMPLIFIED_BT, 0.2, 0.5, 0.8, sigma2_u=0.1)

    @pytest.mark.parametrize("gamma,lam", [(1.0, 0.5), (0.99, 1.0 / 0.99 + 0.02)])
    def test_nonstationary_rejected(self, gamma, lam):
        with pytest.raises((NonStationaryError, ModelError)):
            _chain(Variant.ORIGINAL_BT, gamma, lam, 0.8)

    @pytest.mark.parametrize("field,value", [
        ("gamma", -0.1), ("lam", 0.0), ("lam", 1.2), ("rho", 0.0), ("rho", 1.1),
    ])
    def test_domain_bounds(self, field, value):
        kw = dict(gamma=0.1, lam=0.5, rho=0.8)
        kw[field] = value
        with pytest.raises(ModelError):
            ModelParams(Variant.ORIGINAL_BT, **kw)

    def test_boundary_values_allowed(self):
        ModelParams(Variant.LATENT_FACTOR, 0.0, 1.0, 1.0)
        ModelParams(Variant.LF_DIRECT_AM, 0.0, 1.0, 1.0, m=1.0)

    def test_config_round_trip(self):
        p = ModelParams(Variant.ORIGINAL_BT, 0.33, 0.33, 0.84, normalize_y=True)
        q = ModelParams.from_config(p.to_config())
        assert q.variant is p.variant
        assert q.sigma2_u == pytest.approx(p.sigma2_u, abs=1e-15)

    def test_config_unknown_key_rejected(self):
        with pytest.raises(ModelError, match="unknown"):
            ModelParams.from_config({"variant": "LatentFactor", "lambda": 0.5, "beta": 1})


class TestSteadyState:
    def test_latent_factor_var_is_rho2_plus_sigma2(self):
        p = _chain(Variant.LATENT_FACTOR, 0.0, 0.66, 0.84, sigma2_u=0.2944)
        assert steady_state_var_y(p) == pytest.approx(0.84**2 + 0.2944, abs=1e-12)

    def test_cov_ey_identity(self):
        p = _chain(Variant.ORIGINAL_BT, 0.4, 0.6, 0.7, sigma2_u=0.1)
        ss = steady_state(p)
        assert ss.var_e == 1.0
        assert ss.cov_ey * (1.0 - 0.4 * 0.6) == pytest.approx(0.7, abs=1e-12)

    def test_am_variants_rejected(self):
        p = ModelParams(Variant.LF_FAMILY_AM, 0.0, 0.8, 0.9, m=0.5)
        with pytest.raises(ModelError, match="pedigree"):
            steady_state_var_y(p)

    @pytest.mark.parametrize("gamma", [0.0, 0.3, 0.6, 0.9])
    @pytest.mark.parametrize("lam", [0.1, 0.5, 0.9])
    @pytest.mark.parametrize("rho", [0.2, 0.6, 1.0])
    def test_unit_var_round_trip(self, gamma, lam, rho):
        try:
            s2 = solve_sigma2_for_unit_var(gamma, lam, rho)
        except InfeasibleSigmaError:
            pytest.skip("infeasible cell")
        p = _chain(Variant.ORIGINAL_BT, gamma, lam, rho, sigma2_u=s2)
        assert steady_state_var_y(p) == pytest.approx(1.0, abs=1e-12)

    def test_solve_sigma2_latent_factor(self):
        assert solve_sigma2_for_unit_var(0.0, 0.66, 0.84) == pytest.approx(
            1.0 - 0.84**2, abs=1e-12
        )

    def test_solve_sigma2_bt_cell(self):
        assert solve_sigma2_for_unit_var(0.33, 0.33, 0.84) == pytest.approx(
            0.0131, abs=1e-4
        )

    def test_infeasible_carries_deficit(self):
        with pytest.raises(InfeasibleSigmaError) as exc:
            solve_sigma2_for_unit_var(0.5, 0.5, 1.0)
        assert exc.value.deficit < 0.0

    def test_normalize_y_solves_sigma(self):
        p = _chain(Variant.ORIGINAL_BT, 0.33, 0.33, 0.84, normalize_y=True)
        assert steady_state_var_y(p) == pytest.approx(1.0, abs=1e-12)

    def test_nesting_bt_gamma_zero_matches_latent_factor(self):
        bt = _chain(Variant.ORIGINAL_BT, 0.0, 0.7, 0.8, sigma2_u=0.2)
        lf = _chain(Variant.LATENT_FACTOR, 0.0, 0.7, 0.8, sigma2_u=0.2)
        assert steady_state(bt) == steady_state(lf)

    def test_nesting_bt_sigma_zero_matches_simplified(self):
        bt = _chain(Variant.ORIGINAL_BT, 0.3, 0.5, 0.8, sigma2_u=0.0)
        sbt = _chain(Variant.SIMPLIFIED_BT, 0.3, 0.5, 0.8)
        assert steady_state(bt) == steady_state(sbt)


class TestLongRunSimulationOracle:
    """Forward-simulate one long chain and compare the sample variance."""

    @pytest.mark.parametrize("gamma,lam,rho,sigma2", [
        (0.33, 0.33, 0.84, None),  # unit-variance cell
        (0.5, 0.9, 1.0, 0.0),
    ])
    def test_var_y_against_long_simulation(self, gamma, lam, rho, sigma2):
        if sigma2 is None:
            sigma2 = solve_sigma2_for_unit_var(gamma, lam, rho)
        p = _chain(Variant.ORIGINAL_BT, gamma, lam, rho, sigma2_u=sigma2)
        target = steady_state_var_y(p)
        rng = np.random.default_rng(314159)
        t = 1_000_000
        v = rng.standard_normal(t) * np.sqrt(1.0 - lam**2)
        e = np.empty(t)
        e[0] = rng.standard_normal()
        for i in range(1, t):
            e[i] = lam * e[i - 1] + v[i]
        u = rng.standard_normal(t) * np.sqrt(sigma2)
        y = np.empty(t)
        y[0] = rho * e[0] + u[0]
        for i in range(1, t):
            y[i] = gamma * y[i - 1] + rho * e[i] + u[i]
        sample = y[1000:].var(ddof=1)
        assert sample == pytest.approx(target, rel=0.01)
