"""Synthetic multigenerational data from the structural models.

Two independent sampling strategies:

* an exact joint-Gaussian pedigree sampler driven by the closed-form
  second-moment structure (`build_pedigree_covariance` + `sample_pedigrees`),
* forward simulators that never touch those closed forms: a dynasty
  recursion for the one-parent variants (`simulate_dynasties`) and a
  rank-matching marriage market for the two-parent variants
  (`simulate_marriage_market`).

Agreement between the two routes is the main Monte-Carlo check on the
analytic moments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .models import (
    AM_VARIANTS,
    CHAIN_VARIANTS,
    ModelError,
    ModelParams,
    Variant,
    steady_state,
)
from .panel import ensure_derived

MEMBERS = ("pat_gf", "pat_gm", "mat_gf", "mat_gm", "father", "mother", "child")
CHAIN_MEMBERS = ("grandparent", "parent", "child")

# chain output stores the single lineage in the paternal slots
_CHAIN_COLUMNS = {"grandparent": "pat_gf", "parent": "father", "child": "child"}

_PSD_TOL = -1e-10


class NotPSDError(ModelError):
    """The implied pedigree covariance has a materially negative eigenvalue."""


class MatchingToleranceError(ModelError):
    """The marriage market could not calibrate to the target correlation."""


class BadScenarioParamsError(ModelError):
    pass


@dataclass(frozen=True)
class PedigreeCovariance:
    """Exact joint second moments over the members of one pedigree."""

    member_labels: tuple
    cov_e: np.ndarray
    cov_y: np.ndarray

    def __post_init__(self):
        for name, mat in (("cov_e", self.cov_e), ("cov_y", self.cov_y)):
            if mat.shape != (len(self.member_labels),) * 2:
                raise ModelError(f"{name} shape {mat.shape} does not match labels")
            if not np.allclose(mat, mat.T, atol=1e-12):
                raise ModelError(f"{name} is not symmetric")
            lo = np.linalg.eigvalsh(mat).min()
            if lo < _PSD_TOL:
                raise NotPSDError(f"{name} has eigenvalue {lo:.3e} < {_PSD_TOL}")
        if not np.allclose(np.diag(self.cov_e), 1.0, atol=1e-12):
            raise ModelError("cov_e diagonal must be 1 (endowment normalization)")


@dataclass
class PedigreeRecord:
    """One family: outcomes for the child, two parents and four grandparents
    plus the scenario covariates. Chain (one-parent) records leave the
    absent-lineage fields as NaN."""

    family_id: str
    y_child: float
    y_father: float = np.nan
    y_mother: float = np.nan
    y_pat_gf: float = np.nan
    y_pat_gm: float = np.nan
    y_mat_gf: float = np.nan
    y_mat_gm: float = np.nan
    gender_child: str = "f"
    cohort: int = 0
    region_id: str = ""
    cluster_id: str = ""
    family_choice: bool = False
    post: bool = False
    crisis: float = 0.0


def _direct_am_cov_e(lambda_tilde: float, m: float) -> np.ndarray:
    """7x7 endowment covariance when spouses match on their own endowments.

    Cross-family entries follow from the rank-one coupling through the
    matched pair: Cov(X, Y) = Cov(X, e_f) * m * Cov(e_m, Y)."""
    lam = lambda_tilde * (1.0 + m) / 2.0
    idx = {name: i for i, name in enumerate(MEMBERS)}
    c = np.eye(7)

    def put(a, b, v):
        c[idx[a], idx[b]] = c[idx[b], idx[a]] = v

    put("pat_gf", "pat_gm", m)
    put("mat_gf", "mat_gm", m)
    put("father", "mother", m)
    for gp in ("pat_gf", "pat_gm"):
        put("father", gp, lam)
        put("mother", gp, m * lam)
    for gp in ("mat_gf", "mat_gm"):
        put("mother", gp, lam)
        put("father", gp, m * lam)
    for a in ("pat_gf", "pat_gm"):
        for b in ("mat_gf", "mat_gm"):
            put(a, b, m * lam * lam)
    put("child", "father", lam)
    put("child", "mother", lam)
    for gp in ("pat_gf", "pat_gm", "mat_gf", "mat_gm"):
        v = lambda_tilde * (c[idx["father"], idx[gp]] + c[idx["mother"], idx[gp]]) / 2.0
        put("child", gp, v)
    return c


def _family_am_cov_e(lambda_tilde: float, m: float) -> np.ndarray:
    """7x7 endowment covariance when the wife's mother chooses the husband.

    One-sided choice: the cross-family block is the rank-one coupling
    through (husband's endowment, choosing mother's endowment)."""
    a = lambda_tilde / (2.0 - m * lambda_tilde)  # lambda_I
    s = m * a  # spousal correlation
    idx = {name: i for i, name in enumerate(MEMBERS)}
    c = np.eye(7)

    def put(x, y, v):
        c[idx[x], idx[y]] = c[idx[y], idx[x]] = v

    put("pat_gf", "pat_gm", s)
    put("mat_gf", "mat_gm", s)
    put("father", "mother", s)
    put("father", "pat_gf", a)
    put("father", "pat_gm", a)
    put("mother", "mat_gf", a)
    put("mother", "mat_gm", a)
    # husband projects on the wife's mother with coefficient m
    put("father", "mat_gm", m)
    put("father", "mat_gf", m * s)
    put("mother", "pat_gf", m * a * a)
    put("mother", "pat_gm", m * a * a)
    put("pat_gf", "mat_gm", m * a)
    put("pat_gm", "mat_gm", m * a)
    put("pat_gf", "mat_gf", m * a * s)
    put("pat_gm", "mat_gf", m * a * s)
    put("child", "father", a)
    put("child", "mother", a)
    for gp in ("pat_gf", "pat_gm", "mat_gf", "mat_gm"):
        v = lambda_tilde * (c[idx["father"], idx[gp]] + c[idx["mother"], idx[gp]]) / 2.0
        put("child", gp, v)
    return c


def build_pedigree_covariance(p: ModelParams) -> PedigreeCovariance:
    """Exact second-moment structure implied by the structural equations.

    One-parent variants yield a 3-member chain (grandparent, parent, child);
    AM variants yield the full 7-member pedigree."""
    if p.variant in CHAIN_VARIANTS:
        from .moments import moments_for

        lam = p.lam
        cov_e = np.array([
            [1.0, lam, lam**2],
            [lam, 1.0, lam],
            [lam**2, lam, 1.0],
        ])
        ms = moments_for(p, k_max=2)
        vy = ms.var_y
        b1, b2 = ms.beta_k[1], ms.beta_k[2]
        cov_y = vy * np.array([
            [1.0, b1, b2],
            [b1, 1.0, b1],
            [b2, b1, 1.0],
        ])
        return PedigreeCovariance(CHAIN_MEMBERS, cov_e, cov_y)

    if p.variant is Variant.LF_DIRECT_AM:
        cov_e = _direct_am_cov_e(p.lam, p.m)
    elif p.variant is Variant.LF_FAMILY_AM:
        cov_e = _family_am_cov_e(p.lam, p.m)
    else:
        raise ModelError(f"unsupported variant {p.variant}")
    cov_y = p.rho**2 * cov_e + p.sigma2_u * np.eye(7)
    return PedigreeCovariance(MEMBERS, cov_e, cov_y)


def _base_frame(n: int, rng: np.random.Generator) -> pd.DataFrame:
    fam = np.array([f"F{i:08d}" for i in range(n)])
    return pd.DataFrame({
        "family_id": fam,
        "child_id": np.array([f"C{i:08d}" for i in range(n)]),
        "gender_child": rng.choice(["f", "m"], size=n),
        "cluster_id": fam,
    })


def sample_pedigrees(
    cov: PedigreeCovariance, p: ModelParams, n: int, seed: int
) -> pd.DataFrame:
    """Draw n independent pedigrees exactly realizing `cov`.

    7-member pedigrees: Gaussian endowments from cov_e, outcomes
    y = rho e + u. Chain pedigrees: the stationary (e, y) pair at the
    grandparent generation is drawn jointly and propagated forward with
    the structural recursions, which realizes cov_y exactly in law.
    Deterministic given seed."""
    if n < 1:
        raise ModelError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if cov.member_labels == CHAIN_MEMBERS:
        return _sample_chain(cov, p, n, rng)

    # eigen route tolerates the PSD boundary (e.g. m = 1)
    w, v = np.linalg.eigh(cov.cov_e)
    w = np.clip(w, 0.0, None)
    root = v * np.sqrt(w)
    e = rng.standard_normal((n, 7)) @ root.T
    u = rng.standard_normal((n, 7)) * np.sqrt(p.sigma2_u)
    y = p.rho * e + u
    df = _base_frame(n, rng)
    for j, member in enumerate(MEMBERS):
        df[f"y_{member}"] = y[:, j]
        df[f"e_{member}"] = e[:, j]
    ensure_derived(df)
    df.attrs["chain"] = False
    return df


def _sample_chain(cov, p, n, rng):
    ss = steady_state(p)
    sig = np.sqrt(p.sigma2_u)
    sv = np.sqrt(max(0.0, 1.0 - p.lam**2))
    # joint stationary (e, y): Var(e)=1, Var(y)=ss.var_y, Cov=ss.cov_ey
    e_gp = rng.standard_normal(n)
    resid_sd = np.sqrt(max(0.0, ss.var_y - ss.cov_ey**2))
    y_gp = ss.cov_ey * e_gp + resid_sd * rng.standard_normal(n)
    e_p = p.lam * e_gp + sv * rng.standard_normal(n)
    y_p = p.gamma * y_gp + p.rho * e_p + sig * rng.standard_normal(n)
    e_c = p.lam * e_p + sv * rng.standard_normal(n)
    y_c = p.gamma * y_p + p.rho * e_c + sig * rng.standard_normal(n)
    df = _base_frame(n, rng)
    for label, (ev, yv) in zip(
        CHAIN_MEMBERS, [(e_gp, y_gp), (e_p, y_p), (e_c, y_c)]
    ):
        col = _CHAIN_COLUMNS[label]
        df[f"y_{col}"] = yv
        df[f"e_{col}"] = ev
    for member in MEMBERS:
        if f"y_{member}" not in df.columns:
            df[f"y_{member}"] = np.nan
            df[f"e_{member}"] = np.nan
    ensure_derived(df)
    df.attrs["chain"] = True
    return df


def simulate_dynasties(
    p: ModelParams, n_dynasties: int, burn_in: int = 100, seed: int = 0
) -> pd.DataFrame:
    """Forward-simulate one-parent dynasties and emit the last three
    generations as chain pedigrees. Independent of the analytic moments:
    only the structural recursions appear here."""
    if p.variant not in CHAIN_VARIANTS:
        raise ModelError("simulate_dynasties handles one-parent variants only")
    if n_dynasties < 1:
        raise ModelError(f"n_dynasties must be >= 1, got {n_dynasties}")
    rng = np.random.default_rng(seed)
    n = n_dynasties
    sig = np.sqrt(p.sigma2_u)
    sv = np.sqrt(max(0.0, 1.0 - p.lam**2))
    e = rng.standard_normal(n)
    y = p.rho * e + sig * rng.standard_normal(n)
    kept = []
    for gen in range(burn_in + 3):
        if gen > 0:
            e = p.lam * e + sv * rng.standard_normal(n)
            y = p.gamma * y + p.rho * e + sig * rng.standard_normal(n)
        if gen >= burn_in:
            kept.append((e.copy(), y.copy()))
    kept = kept[-3:]
    df = _base_frame(n, rng)
    for label, (ev, yv) in zip(CHAIN_MEMBERS, kept):
        col = _CHAIN_COLUMNS[label]
        df[f"y_{col}"] = yv
        df[f"e_{col}"] = ev
    for member in MEMBERS:
        if f"y_{member}" not in df.columns:
            df[f"y_{member}"] = np.nan
            df[f"e_{member}"] = np.nan
    ensure_derived(df)
    df.attrs["chain"] = True
    return df


def simulate_chain_outcomes(
    p: ModelParams, n_dynasties: int, n_keep: int,
    burn_in: int = 100, seed: int = 0,
) -> np.ndarray:
    """Forward-simulate one-parent dynasties and return the outcomes of the
    last n_keep generations as an (n_dynasties, n_keep) array, oldest
    generation first. Used for multi-lag correlation studies."""
    if p.variant not in CHAIN_VARIANTS:
        raise ModelError("simulate_chain_outcomes handles one-parent variants only")
    if n_dynasties < 1 or n_keep < 1:
        raise ModelError("need n_dynasties >= 1 and n_keep >= 1")
    rng = np.random.default_rng(seed)
    n = n_dynasties
    sig = np.sqrt(p.sigma2_u)
    sv = np.sqrt(max(0.0, 1.0 - p.lam**2))
    e = rng.standard_normal(n)
    y = p.rho * e + sig * rng.standard_normal(n)
    kept = []
    for gen in range(burn_in + n_keep):
        if gen > 0:
            e = p.lam * e + sv * rng.standard_normal(n)
            y = p.gamma * y + p.rho * e + sig * rng.standard_normal(n)
        if gen >= burn_in:
            kept.append(y.copy())
    return np.column_stack(kept[-n_keep:])


def _rank_match(
    x: np.ndarray,
    index: np.ndarray,
    target: float,
    rng: np.random.Generator,
    tol: float = 0.02,
    max_iter: int = 12,
):
    """Pair the owners of `x` with the owners of `index` so that the paired
    correlation Corr(x, index) hits `target` (Iman-Conover style rank
    coupling with a calibrated latent correlation).

    Returns (men_idx, women_idx): slot k pairs x[men_idx[k]] with
    index[women_idx[k]]."""
    n = len(x)
    if target == 0.0:
        return np.arange(n), rng.permutation(n)
    x_order = np.argsort(x, kind="stable")
    i_order = np.argsort(index, kind="stable")
    c = float(np.clip(target, -0.999, 0.999))
    for _ in range(max_iter):
        z1 = rng.standard_normal(n)
        z2 = rng.standard_normal(n)
        a = z1
        b = c * z1 + np.sqrt(1.0 - c**2) * z2
        a_rank = np.argsort(np.argsort(a, kind="stable"), kind="stable")
        b_rank = np.argsort(np.argsort(b, kind="stable"), kind="stable")
        men = x_order[a_rank]
        women = i_order[b_rank]
        realized = float(np.corrcoef(x[men], index[women])[0, 1])
        if abs(realized - target) <= tol:
            return men, women
        c = float(np.clip(c + 0.8 * (target - realized), -0.999, 0.999))
    raise MatchingToleranceError(
        f"matching correlation {realized:.4f} missed target {target:.4f} "
        f"by more than {tol} after {max_iter} calibration rounds"
    )


def simulate_marriage_market(
    p: ModelParams,
    n_couples: int,
    generations: int = 25,
    matching: str = "Direct",
    seed: int = 0,
) -> pd.DataFrame:
    """Forward population simulator for the two-parent AM variants.

    Each generation holds n_couples men and n_couples women; couples form
    by rank matching on the men's endowments against the women's own
    endowments (Direct) or the women's mothers' endowments (FamilyBased),
    both targeting correlation m. Children inherit the average parental
    endowment with innovation variance holding Var(e) = 1. Emits the final
    three generations as full 7-member pedigrees; realized matching
    diagnostics land in df.attrs["realized"]."""
    if p.variant not in AM_VARIANTS:
        raise ModelError("simulate_marriage_market handles AM variants only")
    expected = "Direct" if p.variant is Variant.LF_DIRECT_AM else "FamilyBased"
    if matching != expected:
        raise ModelError(f"{p.variant.value} requires matching={expected!r}")
    if n_couples < 1000:
        raise ModelError("n_couples >= 1000 required for matching quality")
    if generations < 3:
        raise ModelError("need at least 3 generations for a pedigree")
    rng = np.random.default_rng(seed)
    n = n_couples
    lt, m = p.lam, p.m

    # generation state: matched couples (e_f, e_m) plus, for each couple,
    # the index of each spouse's parent couple one generation back
    e_f = rng.standard_normal(n)
    e_m = rng.standard_normal(n)
    f_par = np.full(n, -1)
    m_par = np.full(n, -1)
    history = [(e_f, e_m, f_par, m_par)]
    realized = {"target": m, "matching_corr": [], "spousal_corr": []}

    for _ in range(1, generations):
        e_f, e_m, f_par, m_par = history[-1]
        s = float(np.corrcoef(e_f, e_m)[0, 1]) if n > 1 else 0.0
        var_v = max(0.0, 1.0 - lt**2 * (1.0 + s) / 2.0)
        ebar = lt * (e_f + e_m) / 2.0
        sons = ebar + np.sqrt(var_v) * rng.standard_normal(n)
        daughters = ebar + np.sqrt(var_v) * rng.standard_normal(n)
        if matching == "Direct":
            index = daughters
        else:
            index = e_m  # the daughter's mother chooses the son-in-law
        men, women = _rank_match(sons, index, m, rng)
        new_e_f = sons[men]
        new_e_m = daughters[women]
        realized["matching_corr"].append(
            float(np.corrcoef(new_e_f, index[women])[0, 1]) if m != 0.0 else 0.0
        )
        realized["spousal_corr"].append(float(np.corrcoef(new_e_f, new_e_m)[0, 1]))
        history.append((new_e_f, new_e_m, men, women))
        history = history[-3:]

    gp_ef, gp_em = history[-2][0], history[-2][1]
    e_f, e_m, f_par, m_par = history[-1]
    s = float(np.corrcoef(e_f, e_m)[0, 1])
    var_v = max(0.0, 1.0 - lt**2 * (1.0 + s) / 2.0)
    e_child = lt * (e_f + e_m) / 2.0 + np.sqrt(var_v) * rng.standard_normal(n)

    sig = np.sqrt(p.sigma2_u)
    df = _base_frame(n, rng)
    e_cols = {
        "pat_gf": gp_ef[f_par],
        "pat_gm": gp_em[f_par],
        "mat_gf": gp_ef[m_par],
        "mat_gm": gp_em[m_par],
        "father": e_f,
        "mother": e_m,
        "child": e_child,
    }
    for member, ev in e_cols.items():
        df[f"e_{member}"] = ev
        df[f"y_{member}"] = p.rho * ev + sig * rng.standard_normal(n)
    ensure_derived(df)
    df.attrs["chain"] = False
    df.attrs["realized"] = realized
    return df


def plant_scenario(
    records: pd.DataFrame, scenario: str, scenario_params: dict, seed: int = 0
) -> pd.DataFrame:
    """Plant synthetic covariates (and, for CrisisDiD, outcomes) on a set of
    pedigree records so the regression machinery can be tested against
    known coefficients."""
    if len(records) == 0:
        raise BadScenarioParamsError("records must be non-empty")
    if scenario == "FamilyChoiceSplit":
        return _plant_family_choice(records, scenario_params, seed)
    if scenario == "CrisisDiD":
        return _plant_crisis_did(records, scenario_params, seed)
    raise BadScenarioParamsError(f"unknown scenario {scenario!r}")


def _plant_family_choice(records, params, seed):
    required = {"lambda_tilde", "m_family", "m_direct", "rho"}
    unknown = set(params) - required - {"share"}
    if unknown or not required <= set(params):
        raise BadScenarioParamsError(
            f"FamilyChoiceSplit needs {sorted(required)} (+ optional share), got {sorted(params)}"
        )
    share = float(params.get("share", 0.5))
    if not 0.0 < share < 1.0:
        raise BadScenarioParamsError(f"share must be in (0, 1), got {share}")
    rng = np.random.default_rng(seed)
    n = len(records)
    flag = rng.random(n) < share
    n_fam = int(flag.sum())
    n_dir = n - n_fam
    seeds = np.random.SeedSequence(seed).spawn(2)
    common = dict(lam=float(params["lambda_tilde"]), rho=float(params["rho"]),
                  gamma=0.0, normalize_y=True)
    out = records.reset_index(drop=True).copy()
    parts = {}
    if n_fam:
        pf = ModelParams(variant=Variant.LF_FAMILY_AM, m=float(params["m_family"]), **common)
        parts[True] = sample_pedigrees(build_pedigree_covariance(pf), pf, n_fam,
                                       seed=seeds[0].generate_state(1)[0])
    if n_dir:
        pdm = ModelParams(variant=Variant.LF_DIRECT_AM, m=float(params["m_direct"]), **common)
        parts[False] = sample_pedigrees(build_pedigree_covariance(pdm), pdm, n_dir,
                                        seed=seeds[1].generate_state(1)[0])
    cols = [f"y_{mem}" for mem in MEMBERS] + [f"e_{mem}" for mem in MEMBERS]
    for val, chunk in parts.items():
        out.loc[flag == val, cols] = chunk[cols].to_numpy()
    out["family_choice"] = flag
    ensure_derived(out)
    return out


def _plant_crisis_did(records, params, seed):
    beta_keys = [f"beta{i}" for i in range(1, 10)]
    known = set(beta_keys) | {
        "beta_post", "n_regions", "n_clusters", "noise_sd", "fe_sd",
        "cohort_lo", "cohort_hi", "post_from",
    }
    unknown = set(params) - known
    if unknown:
        raise BadScenarioParamsError(f"unknown CrisisDiD params: {sorted(unknown)}")
    missing = [k for k in beta_keys if k not in params]
    if missing:
        raise BadScenarioParamsError(f"CrisisDiD needs planted {missing}")
    b = {k: float(params[k]) for k in beta_keys}
    b_post = float(params.get("beta_post", 0.0))
    n_regions = int(params.get("n_regions", 60))
    n_clusters = int(params.get("n_clusters", 20))
    noise_sd = float(params.get("noise_sd", 1.0))
    fe_sd = float(params.get("fe_sd", 0.5))
    cohort_lo = int(params.get("cohort_lo", 1975))
    cohort_hi = int(params.get("cohort_hi", 1988))
    post_from = int(params.get("post_from", 1979))
    if n_clusters < 2 or n_regions < n_clusters:
        raise BadScenarioParamsError("need n_regions >= n_clusters >= 2")

    rng = np.random.default_rng(seed)
    out = records.reset_index(drop=True).copy()
    ensure_derived(out)
    if out["y_parents_avg"].isna().any() or out["y_gp_avg"].isna().any():
        raise BadScenarioParamsError(
            "CrisisDiD needs full 7-member pedigrees (chain records lack both lineages)"
        )
    n = len(out)
    region = rng.integers(0, n_regions, size=n)
    regions_per_cluster = -(-n_regions // n_clusters)
    cluster = region // regions_per_cluster
    crisis_by_region = rng.standard_normal(n_regions)
    crisis = crisis_by_region[region]
    crisis = (crisis - crisis.mean()) / crisis.std(ddof=1)
    cohort = rng.integers(cohort_lo, cohort_hi + 1, size=n)
    post = (cohort >= post_from).astype(float)
    fe = fe_sd * rng.standard_normal(n_regions)

    edu_p = out["y_parents_avg"].to_numpy()
    edu_gp = out["y_gp_avg"].to_numpy()
    y = (
        b["beta1"] * edu_p
        + b["beta2"] * edu_gp
        + b["beta3"] * edu_p * post
        + b["beta4"] * edu_gp * post
        + b["beta5"] * edu_p * crisis
        + b["beta6"] * edu_gp * crisis
        + b["beta7"] * edu_p * post * crisis
        + b["beta8"] * edu_gp * post * crisis
        + b["beta9"] * post * crisis
        + b_post * post
        + fe[region]
        + noise_sd * rng.standard_normal(n)
    )
    out["y_child"] = y
    out["cohort"] = cohort
    out["region_id"] = np.array([f"R{r:03d}" for r in region])
    out["cluster_id"] = np.array([f"K{k:03d}" for k in cluster])
    out["post"] = post.astype(bool)
    out["crisis"] = crisis
    ensure_derived(out)
    return out
