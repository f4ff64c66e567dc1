"""Closed-form population moments and regression coefficients.

Every function here is a pure formula evaluation; the Monte-Carlo samplers
in pedigree.py provide the independent cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .models import (
    ModelParams,
    ModelError,
    NonStationaryError,
    Variant,
    solve_sigma2_for_unit_var,
    steady_state_var_y,
)


class DegenerateError(ModelError):
    """A correlation input sits on a boundary that makes the formula 0/0."""


@dataclass
class MomentSet:
    """Analytic population moments for one parameterization.

    Fields that do not apply to a variant are left as None. Correlations
    use the outcome metric (both y's standardized to unit variance).
    """

    beta_k: dict = field(default_factory=dict)
    beta_p: float | None = None
    beta_gp_same: float | None = None
    beta_gp_cross: float | None = None
    beta_gp_both: float | None = None
    spousal_corr_e: float | None = None
    spousal_corr_y: float | None = None
    lambda_eff: float | None = None
    var_y: float | None = None

    def to_dict(self) -> dict:
        d = {f"beta_{k}": v for k, v in sorted(self.beta_k.items())}
        d.update(
            beta_p=self.beta_p,
            beta_gp_same=self.beta_gp_same,
            beta_gp_cross=self.beta_gp_cross,
            beta_gp_both=self.beta_gp_both,
            spousal_corr_e=self.spousal_corr_e,
            spousal_corr_y=self.spousal_corr_y,
            lambda_eff=self.lambda_eff,
            var_y=self.var_y,
        )
        return d


def duality_gp(beta1: float, beta2: float) -> float:
    """Grandparent coefficient implied by the two pairwise correlations.

    (beta2 - beta1^2) / (1 - beta1^2): positive exactly when persistence
    across two generations exceeds the geometric rate beta1^2.
    """
    if abs(beta1) >= 1.0:
        raise DegenerateError(f"|beta1| must be < 1, got {beta1}")
    return (beta2 - beta1**2) / (1.0 - beta1**2)


def duality_gp_nonstationary(
    beta2: float, beta1_gp_p: float, beta1_p_c: float, var_ratio: float
) -> float:
    """Grandparent coefficient without assuming stationarity.

    beta1_gp_p / beta1_p_c are the parent-on-grandparent and
    child-on-parent pairwise slopes; var_ratio is
    Var(y_gp) / Var(residual of y_gp on y_parent), supplied by the caller.
    """
    if var_ratio <= 0.0:
        raise ModelError(f"var_ratio must be > 0, got {var_ratio}")
    return (beta2 - beta1_gp_p * beta1_p_c) * var_ratio


def simplified_bt_coeffs(gamma: float, lam: float) -> tuple[float, float]:
    """(beta_p, beta_gp) of the noiseless model: (gamma+lam, -gamma*lam)."""
    if gamma * lam >= 1.0:
        raise NonStationaryError(f"gamma*lambda = {gamma * lam} >= 1")
    return gamma + lam, -gamma * lam


def lf_moments(rho: float, lam: float, k_max: int = 3) -> MomentSet:
    """One-parent latent factor model: beta_{-k} = rho^2 lam^k."""
    beta_k = {k: rho**2 * lam**k for k in range(1, k_max + 1)}
    b1 = beta_k[1]
    gp = (rho**2 * lam**2 - rho**4 * lam**2) / (1.0 - rho**4 * lam**2)
    beta_p = (b1 - beta_k[2] * b1) / (1.0 - b1**2) if k_max >= 2 else None
    return MomentSet(
        beta_k=beta_k,
        beta_p=beta_p,
        beta_gp_same=gp,
        lambda_eff=lam,
        var_y=1.0,
    )


def bt_gp_normalized(gamma: float, lam: float, rho: float) -> float:
    """Grandparent coefficient under the unit-Var(y) normalization.

    With A = rho^2 lam / (1 - gamma lam):
        beta_gp = A (lam - gamma - A) / (1 - (gamma + A)^2)
    Negative whenever the direct effect dominates (gamma > lam).
    """
    solve_sigma2_for_unit_var(gamma, lam, rho)  # feasibility gate
    a = rho**2 * lam / (1.0 - gamma * lam)
    denom = 1.0 - (gamma + a) ** 2
    if denom == 0.0:
        raise DegenerateError(f"gamma + rho^2*lam/(1-gamma*lam) = 1 at {gamma=}, {lam=}, {rho=}")
    return a * (lam - gamma - a) / denom


def _bt_gp_general_parts(gamma, lam, rho, sigma2_u):
    g, l, r, s2 = gamma, lam, rho, sigma2_u
    num = l * r**2 * (g**2 * l * s2 + g * (l**2 - 1) * r**2 - g * (l**2 + 1) * s2 + l * s2)
    den = -2 * r**2 * s2 * (g * l - 1) + s2**2 * (g * l - 1) ** 2 - (l**2 - 1) * r**4
    return num, den


def bt_gp_general(gamma: float, lam: float, rho: float, sigma2_u: float) -> float:
    """Grandparent coefficient without normalizing Var(y).

    Collapses to -gamma*lam at sigma2_u = 0 and agrees with
    bt_gp_normalized when sigma2_u is the unit-variance solution.
    """
    if gamma >= 1.0 or gamma * lam >= 1.0:
        raise NonStationaryError(f"no steady state at gamma={gamma}, lambda={lam}")
    num, den = _bt_gp_general_parts(gamma, lam, rho, sigma2_u)
    return num / den


def bt_gp_dgamma(gamma: float, lam: float, rho: float, sigma2_u: float) -> float:
    """d beta_gp / d gamma of the general form (quotient rule, exact).

    Strictly negative for lam > 0, rho > 0.
    """
    if gamma >= 1.0 or gamma * lam >= 1.0:
        raise NonStationaryError(f"no steady state at gamma={gamma}, lambda={lam}")
    g, l, r, s2 = gamma, lam, rho, sigma2_u
    num, den = _bt_gp_general_parts(g, l, r, s2)
    dnum = l * r**2 * (2 * g * l * s2 + (l**2 - 1) * r**2 - (l**2 + 1) * s2)
    dden = -2 * r**2 * s2 * l + 2 * l * s2**2 * (g * l - 1)
    return (dnum * den - num * dden) / den**2


def _gp_coeff(r_cp: float, r_cg: float, r_pg: float) -> float:
    """Grandparent slope in the two-regressor projection of the child
    outcome on one parent and one grandparent, all variables standardized."""
    if abs(r_pg) >= 1.0:
        raise DegenerateError(
            f"parent-grandparent correlation {r_pg} leaves no independent variation"
        )
    return (r_cg - r_cp * r_pg) / (1.0 - r_pg**2)


def beta_gp_cross_paper_form(lambda_eff: float, m: float, rho: float) -> float:
    """Published cross-lineage closed form (rho^2 l^2 - m^2 rho^4 l^2)/(1 - m^2 rho^4 l^2).

    Kept for the verification report: it disagrees with the coefficient
    implied by the pedigree covariance (and by the published both-parents
    auxiliary regression) except at m = 0 or m = 1; see
    direct_am_moments for the covariance-consistent value.
    """
    l = lambda_eff
    return (rho**2 * l**2 - m**2 * rho**4 * l**2) / (1.0 - m**2 * rho**4 * l**2)


def direct_am_moments(lambda_tilde: float, m: float, rho: float, k_max: int = 2) -> MomentSet:
    """Two-parent latent factor model with spouses matching on their own
    endowments at strength m.

    Effective one-parent transferability lam = lambda_tilde (1+m)/2;
    beta_{-k} = rho^2 lam^k. The cross-lineage coefficient is computed
    from the projection moments (parent-to-cross-grandparent covariance
    m*lam), which also reproduce the published both-parents coefficient.
    """
    _check_am_domain(lambda_tilde, m, rho)
    lam = lambda_tilde * (1.0 + m) / 2.0
    if rho**2 * lam >= 1.0:
        raise DegenerateError("beta_1 = 1: outcomes are perfectly correlated")
    beta_k = {k: rho**2 * lam**k for k in range(1, k_max + 1)}
    b1 = rho**2 * lam
    b2 = rho**2 * lam**2
    gp_same = _gp_coeff(b1, b2, b1)
    gp_cross = _gp_coeff(b1, b2, m * b1)
    l, r = lam, rho
    both_den = 1.0 - m**2 * r**4 + r**4 * l**2 * (m**2 * (2.0 * r**2 - 1.0) - 1.0)
    if both_den > 0.0:
        gp_both = r**2 * l**2 * (r**2 - 1.0) * (m * r**2 - 1.0) / both_den
    else:
        # m = rho = 1: the two parents are identical, both-parents
        # regression is rank deficient
        gp_both = None
    beta_p = (b1 - b2 * b1) / (1.0 - b1**2)
    return MomentSet(
        beta_k=beta_k,
        beta_p=beta_p,
        beta_gp_same=gp_same,
        beta_gp_cross=gp_cross,
        beta_gp_both=gp_both,
        spousal_corr_e=m,
        spousal_corr_y=rho**2 * m,
        lambda_eff=lam,
        var_y=1.0,
    )


def family_am_moments(lambda_tilde: float, m: float, rho: float) -> MomentSet:
    """Two-parent latent factor model where the wife's mother chooses the
    husband (projection strength m on her own endowment).

    lambda_I = lambda_tilde / (2 - m lambda_tilde); spousal endowment
    correlation m*lambda_I; the same-lineage grandparent coefficient runs
    through the chooser (the grandmother of the maternal lineage).
    """
    _check_am_domain(lambda_tilde, m, rho)
    lt = lambda_tilde
    lam_i = lt / (2.0 - m * lt)
    if rho**2 * lam_i >= 1.0:
        raise DegenerateError("beta_1 = 1: outcomes are perfectly correlated")
    b1 = rho**2 * lam_i
    b2 = rho**2 * (lt**2 + m * lt * (2.0 - m * lt)) / (4.0 - 2.0 * m * lt)
    gp_same = (rho**2 * lt * (lam_i + m) / 2.0 - rho**4 * lam_i**2) / (1.0 - rho**4 * lam_i**2)
    beta_p = (b1 - b2 * b1) / (1.0 - b1**2)
    return MomentSet(
        beta_k={1: b1, 2: b2},
        beta_p=beta_p,
        beta_gp_same=gp_same,
        spousal_corr_e=m * lam_i,
        spousal_corr_y=rho**2 * m * lam_i,
        lambda_eff=lam_i,
        var_y=1.0,
    )


def _check_am_domain(lambda_tilde: float, m: float, rho: float) -> None:
    if not 0.0 < lambda_tilde <= 1.0:
        raise ModelError(f"lambda_tilde must be in (0, 1], got {lambda_tilde}")
    if not 0.0 <= m <= 1.0:
        raise ModelError(f"m must be in [0, 1], got {m}")
    if not 0.0 < rho <= 1.0:
        raise ModelError(f"rho must be in (0, 1], got {rho}")


def moments_for(p: ModelParams, k_max: int = 3) -> MomentSet:
    """MomentSet for a full parameter bundle (dispatch on variant)."""
    if p.variant is Variant.LF_DIRECT_AM:
        return direct_am_moments(p.lam, p.m, p.rho, k_max=min(k_max, 2))
    if p.variant is Variant.LF_FAMILY_AM:
        return family_am_moments(p.lam, p.m, p.rho)
    # Becker-Tomes chain variants
    vy = steady_state_var_y(p)
    b1 = p.gamma + p.rho**2 * p.lam / ((1.0 - p.gamma * p.lam) * vy)
    b2 = p.gamma * b1 + p.rho**2 * p.lam**2 / ((1.0 - p.gamma * p.lam) * vy)
    beta_k = {1: b1, 2: b2}
    for k in range(3, k_max + 1):
        # Cov(y_t, y_{t-k}) = g Cov(y_{t-1}, y_{t-k}) + r Cov(e_t, y_{t-k}),
        # and Cov(e_t, y_{t-k}) = l^k r/(1-g l) in steady state
        beta_k[k] = p.gamma * beta_k[k - 1] + p.rho**2 * p.lam**k / ((1.0 - p.gamma * p.lam) * vy)
    gp = duality_gp(b1, b2)
    beta_p = (b1 - b2 * b1) / (1.0 - b1**2)
    return MomentSet(
        beta_k=beta_k,
        beta_p=beta_p,
        beta_gp_same=gp,
        lambda_eff=p.lam,
        var_y=vy,
    )
