"""Cross-validation grid: analytic moments vs. both samplers vs. OLS.

Each check returns a row (name, passed, detail). The CLI `verify`
subcommand renders the rows and exits nonzero if any check fails. All
checks are deterministic given the seed; no timestamps appear in the
output so reports are byte-identical across reruns.
"""

from __future__ import annotations

import numpy as np

from .models import ModelParams, Variant
from .moments import (
    beta_gp_cross_paper_form,
    bt_gp_dgamma,
    bt_gp_general,
    bt_gp_normalized,
    direct_am_moments,
    duality_gp,
    duality_gp_nonstationary,
    family_am_moments,
    lf_moments,
    solve_sigma2_for_unit_var,
)
from .pedigree import (
    build_pedigree_covariance,
    sample_pedigrees,
    simulate_dynasties,
    simulate_marriage_market,
)
from .regression import RegressionSpec, build_spec, fit, fwl_partial


def _row(name, passed, detail):
    return {"check": name, "passed": bool(passed), "detail": detail}


def run_verification(seed: int = 20240811, n_large: int = 200_000, n_market: int = 50_000):
    """Run the full grid; returns a list of row dicts."""
    rows = []
    rng_seeds = np.random.SeedSequence(seed).spawn(10)
    seeds = [int(s.generate_state(1)[0]) for s in rng_seeds]

    # -- exact identities ---------------------------------------------------
    knife = duality_gp(0.5, 0.25)
    rows.append(_row(
        "duality knife edge (beta2 = beta1^2)",
        abs(knife) < 1e-15,
        f"duality_gp(0.5, 0.25) = {knife:.3e}",
    ))

    worst = 0.0
    for g in np.linspace(0.05, 0.85, 5):
        for l in np.linspace(0.1, 0.9, 5):
            worst = max(worst, abs(bt_gp_general(g, l, 0.8, 0.0) + g * l))
    rows.append(_row(
        "sigma2 -> 0 collapses general form to -gamma*lambda (5x5 grid)",
        worst < 1e-10,
        f"max |beta_gp - (-gamma*lambda)| = {worst:.3e}",
    ))

    p_lf = ModelParams(Variant.LATENT_FACTOR, 0.0, 0.66, 0.84, normalize_y=True)
    df = simulate_dynasties(p_lf, 20_000, seed=seeds[0])
    spec = build_spec("multigen_chain")
    res = fit(spec, df)
    fwl = fwl_partial(spec, df, "y_pat_gf")
    gap = abs(fwl - res.coefficients["y_pat_gf"])
    rows.append(_row(
        "FWL partialling equals multivariate OLS coefficient",
        gap < 1e-10,
        f"|FWL - OLS| = {gap:.3e}",
    ))

    yc, yp, yg = (df[c].to_numpy() for c in ("y_child", "y_father", "y_pat_gf"))
    b2 = np.cov(yc, yg, ddof=1)[0, 1] / np.var(yg, ddof=1)
    b_gp_p = np.cov(yp, yg, ddof=1)[0, 1] / np.var(yg, ddof=1)
    b_p_c = np.cov(yc, yp, ddof=1)[0, 1] / np.var(yp, ddof=1)
    slope_g_on_p = np.cov(yg, yp, ddof=1)[0, 1] / np.var(yp, ddof=1)
    resid = yg - slope_g_on_p * yp
    ratio = np.var(yg, ddof=1) / np.var(resid, ddof=1)
    closed = duality_gp_nonstationary(b2, b_gp_p, b_p_c, ratio)
    gap = abs(closed - res.coefficients["y_pat_gf"])
    rows.append(_row(
        "non-stationary closed form with sample moments equals OLS",
        gap < 1e-10,
        f"|closed form - OLS| = {gap:.3e}",
    ))

    # -- latent factor cell (blue process) ----------------------------------
    analytic = lf_moments(0.84, 0.66).beta_gp_same
    cov = build_pedigree_covariance(p_lf)
    big = sample_pedigrees(cov, p_lf, n_large, seed=seeds[1])
    fitted = fit(spec, big).coefficients["y_pat_gf"]
    rows.append(_row(
        "latent factor (rho=0.84, lambda=0.66): fitted beta_gp vs analytic",
        abs(fitted - analytic) < 0.01 and abs(analytic - 0.11) < 0.01,
        f"analytic = {analytic:.4f} (published rounding 0.11), fitted = {fitted:.4f}",
    ))

    # -- Becker-Tomes cell (red process) -------------------------------------
    p_bt = ModelParams(Variant.ORIGINAL_BT, 0.33, 0.33, 0.84, normalize_y=True)
    bt = simulate_dynasties(p_bt, n_large, seed=seeds[2])
    res_bt = fit(spec, bt)
    b_gp = res_bt.coefficients["y_pat_gf"]
    se_gp = res_bt.se["y_pat_gf"]
    general = bt_gp_general(0.33, 0.33, 0.84, p_bt.sigma2_u)
    direct8 = bt_gp_normalized(0.33, 0.33, 0.84)
    rows.append(_row(
        "Becker-Tomes (gamma=lambda=0.33, rho=0.84): fitted vs closed form",
        abs(b_gp - general) < 3 * se_gp,
        f"fitted = {b_gp:.4f} (se {se_gp:.4f}), closed form = {general:.4f}, "
        f"normalized form = {direct8:.4f}; published figure note value -0.07 "
        "disagrees with both and is reported here for the record",
    ))

    # -- derivative of the grandparent coefficient --------------------------
    bad = []
    h = 1e-6
    for g in (1e-6, 0.1, 0.3, 0.5):
        for l in (0.2, 0.5, 0.8):
            for s2 in (0.05, 0.2, 0.6):
                d = bt_gp_dgamma(g, l, 0.8, s2)
                fd = (bt_gp_general(g + h, l, 0.8, s2) - bt_gp_general(g - h, l, 0.8, s2)) / (2 * h)
                if d >= 0 or abs(d - fd) / abs(fd) > 1e-4:
                    bad.append((g, l, s2, d, fd))
    rows.append(_row(
        "d beta_gp / d gamma: negative and matches finite differences",
        not bad,
        "all grid points pass" if not bad else f"failures: {bad[:3]}",
    ))

    sign_bad = []
    for g in np.linspace(0.1, 0.6, 6):
        for l in np.linspace(0.05, 0.5, 6):
            if g <= l:
                continue
            try:
                solve_sigma2_for_unit_var(g, l, 0.5)
            except Exception:
                continue
            if bt_gp_normalized(g, l, 0.5) >= 0:
                sign_bad.append((g, l))
    rows.append(_row(
        "normalized beta_gp < 0 whenever gamma > lambda (feasible grid)",
        not sign_bad,
        "all grid points pass" if not sign_bad else f"failures: {sign_bad[:3]}",
    ))

    # -- assortative mating laws ---------------------------------------------
    ratio_bad = []
    for m in np.linspace(0.0, 1.0, 11):
        for lt in np.linspace(0.1, 1.0, 10):
            r_dir = (lt + m * lt) / 2.0
            r_fam = (lt + m * (2.0 - m * lt)) / 2.0
            at_knife = m == 1.0 and lt == 1.0
            if (r_fam <= r_dir and m > 0 and not at_knife) or r_fam < r_dir - 1e-12:
                ratio_bad.append((m, lt))
    rows.append(_row(
        "family-based beta2/beta1 ratio exceeds the direct-matching ratio",
        not ratio_bad,
        "all grid cells pass" if not ratio_bad else f"failures: {ratio_bad[:3]}",
    ))

    gp_bad = []
    for m in np.linspace(0.0, 0.9, 10):
        for lt in np.linspace(0.1, 1.0, 10):
            for rho in (0.5, 0.84, 1.0):
                fam = family_am_moments(lt, m, rho).beta_gp_same
                dire = direct_am_moments(lt, m, rho).beta_gp_same
                if fam < dire - 1e-12:
                    gp_bad.append((m, lt, rho))
    rows.append(_row(
        "family-based same-lineage beta_gp >= direct-matching beta_gp",
        not gp_bad,
        "all grid cells pass" if not gp_bad else f"failures: {gp_bad[:3]}",
    ))

    p_fam = ModelParams(Variant.LF_FAMILY_AM, 0.0, 0.8, 0.9, m=0.5, normalize_y=True)
    mkt = simulate_marriage_market(p_fam, n_market, generations=12,
                                   matching="FamilyBased", seed=seeds[3])
    target = family_am_moments(0.8, 0.5, 0.9).spousal_corr_e
    got = float(np.corrcoef(mkt["e_father"], mkt["e_mother"])[0, 1])
    rows.append(_row(
        "family AM market: emergent spousal endowment correlation = m*lambda_I",
        abs(got - target) < 0.015,
        f"realized = {got:.4f}, analytic = {target:.4f}",
    ))

    p_dir = ModelParams(Variant.LF_DIRECT_AM, 0.0, 0.8, 0.9, m=0.5, normalize_y=True)
    ped = sample_pedigrees(build_pedigree_covariance(p_dir), p_dir, n_large, seed=seeds[4])
    ms = direct_am_moments(0.8, 0.5, 0.9)
    # single grandparents, so the fitted values are comparable to the
    # single-ancestor closed forms
    same = fit(RegressionSpec("y_child", ("y_father", "y_pat_gf")), ped)
    cross = fit(RegressionSpec("y_child", ("y_father", "y_mat_gf")), ped)
    b_same, se_same = same.coefficients["y_pat_gf"], same.se["y_pat_gf"]
    b_cross, se_cross = cross.coefficients["y_mat_gf"], cross.se["y_mat_gf"]
    sep = (b_cross - b_same) / np.hypot(se_same, se_cross)
    ok = (
        sep > 3.0
        and abs(b_same - ms.beta_gp_same) < 3 * se_same
        and abs(b_cross - ms.beta_gp_cross) < 3 * se_cross
    )
    rows.append(_row(
        "direct AM: cross-lineage grandparent coefficient exceeds same-lineage",
        ok,
        f"cross = {b_cross:.4f} (analytic {ms.beta_gp_cross:.4f}), "
        f"same = {b_same:.4f} (analytic {ms.beta_gp_same:.4f}), "
        f"separation = {sep:.1f} SE; the published cross-lineage closed form "
        f"{beta_gp_cross_paper_form(ms.lambda_eff, 0.5, 0.9):.4f} is "
        "inconsistent with the both-parents auxiliary moments and is shown "
        "for the record",
    ))

    return rows


def render_text(rows) -> str:
    lines = []
    n_fail = sum(not r["passed"] for r in rows)
    for r in rows:
        status = "PASS" if r["passed"] else "FAIL"
        lines.append(f"[{status}] {r['check']}")
        lines.append(f"       {r['detail']}")
    lines.append("")
    lines.append(f"{len(rows) - n_fail}/{len(rows)} checks passed")
    return "\n".join(lines) + "\n"
