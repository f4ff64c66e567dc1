"""Least-squares machinery: specs, fixed effects, FWL, sandwich covariances.

All estimation is plain OLS through a QR-based solve; fixed effects are
absorbed by within-group demeaning, and clustered covariances use the
one-way Liang-Zeger sandwich with the usual G/(G-1) * (N-1)/(N-K)
small-sample factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg


class RegressionError(ValueError):
    pass


class SchemaMismatchError(RegressionError):
    pass


class RankDeficientError(RegressionError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"collinear design columns: {self.columns}")


class EmptyAfterListwiseDeletionError(RegressionError):
    pass


class TooFewClustersError(RegressionError):
    pass


@dataclass(frozen=True)
class RegressionSpec:
    """Declarative description of one regression."""

    outcome: str
    regressors: tuple = ()
    interactions: tuple = ()  # tuples of 2 or 3 column names
    fixed_effects: str | None = None
    cluster: str | None = None
    include_intercept: bool = True
    binary_outcome_lpm: bool = False

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        object.__setattr__(
            self, "interactions", tuple(tuple(t) for t in self.interactions)
        )
        for t in self.interactions:
            if len(t) not in (2, 3):
                raise RegressionError(f"interaction arity must be 2 or 3: {t}")

    def columns_needed(self):
        cols = {self.outcome, *self.regressors}
        for t in self.interactions:
            cols.update(t)
        if self.fixed_effects:
            cols.add(self.fixed_effects)
        if self.cluster:
            cols.add(self.cluster)
        return cols


@dataclass
class FitResult:
    """OLS estimates with a sandwich covariance."""

    coefficients: dict
    covariance: np.ndarray
    names: list
    n_obs: int
    n_dropped: int
    r_squared: float
    n_clusters: int | None = None
    residuals: np.ndarray = field(default=None, repr=False)
    cov_type: str = "HC0"

    @property
    def se(self) -> dict:
        s = np.sqrt(np.diag(self.covariance))
        return dict(zip(self.names, s))

    def tstat(self, name: str) -> float:
        return self.coefficients[name] / self.se[name]

    def conf_int(self, name: str, level: float = 0.95) -> tuple[float, float]:
        from scipy.stats import norm

        z = norm.ppf(0.5 + level / 2.0)
        b, s = self.coefficients[name], self.se[name]
        return b - z * s, b + z * s

    def table(self) -> pd.DataFrame:
        se = self.se
        rows = [
            {"term": k, "estimate": v, "se": se[k], "t": v / se[k] if se[k] > 0 else np.nan}
            for k, v in self.coefficients.items()
        ]
        return pd.DataFrame(rows)


def _interaction_name(cols) -> str:
    return ":".join(cols)


def _to_numeric(series: pd.Series, name: str) -> np.ndarray:
    if series.dtype == bool:
        return series.to_numpy(dtype=float)
    if not np.issubdtype(series.dtype, np.number):
        raise SchemaMismatchError(f"column {name!r} is not numeric")
    return series.to_numpy(dtype=float)


def _build_design(spec: RegressionSpec, data: pd.DataFrame):
    missing = [c for c in spec.columns_needed() if c not in data.columns]
    if missing:
        raise SchemaMismatchError(f"panel lacks columns {missing}")

    base_cols = {}
    for c in {spec.outcome, *spec.regressors, *(c for t in spec.interactions for c in t)}:
        base_cols[c] = _to_numeric(data[c], c)

    names = list(spec.regressors)
    mats = [base_cols[c] for c in spec.regressors]
    for t in spec.interactions:
        names.append(_interaction_name(t))
        prod = base_cols[t[0]].copy()
        for c in t[1:]:
            prod = prod * base_cols[c]
        mats.append(prod)
    X = np.column_stack(mats) if mats else np.empty((len(data), 0))
    y = base_cols[spec.outcome]

    keep = np.isfinite(y) & np.all(np.isfinite(X), axis=1)
    if spec.fixed_effects:
        keep &= data[spec.fixed_effects].notna().to_numpy()
    if spec.cluster:
        keep &= data[spec.cluster].notna().to_numpy()
    n_dropped = int((~keep).sum())
    if not keep.any():
        raise EmptyAfterListwiseDeletionError("no complete rows left")
    X, y = X[keep], y[keep]

    fe_codes = None
    if spec.fixed_effects:
        fe_codes = pd.factorize(data.loc[keep, spec.fixed_effects])[0]
    cl_codes = None
    if spec.cluster:
        cl_codes = pd.factorize(data.loc[keep, spec.cluster])[0]
    return X, y, names, fe_codes, cl_codes, n_dropped


def _demean_within(arr: np.ndarray, codes: np.ndarray) -> np.ndarray:
    df = pd.DataFrame(arr)
    return (df - df.groupby(codes).transform("mean")).to_numpy()


def _check_rank(X: np.ndarray, names) -> None:
    if X.shape[1] == 0:
        return
    _, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(X.shape) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    rank = int((diag > tol).sum())
    if rank < X.shape[1]:
        raise RankDeficientError([names[j] for j in piv[rank:]])


def fit(spec: RegressionSpec, data: pd.DataFrame, cov: str = "auto") -> FitResult:
    """OLS fit of a spec on a panel.

    cov: "auto" (clustered if spec.cluster else HC0), "HC0", "classical",
    or "clustered"."""
    X, y, names, fe_codes, cl_codes, n_dropped = _build_design(spec, data)
    n = len(y)

    if fe_codes is not None:
        y = _demean_within(y[:, None], fe_codes)[:, 0]
        X = _demean_within(X, fe_codes)
        # intercept is collinear with the absorbed effects
    elif spec.include_intercept:
        X = np.column_stack([np.ones(n), X])
        names = ["(intercept)"] + names

    _check_rank(X, names)
    k = X.shape[1]
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta

    ybar = y.mean() if (spec.include_intercept or fe_codes is not None) else 0.0
    tss = float(((y - ybar) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / tss if tss > 0 else np.nan

    xtx_inv = np.linalg.inv(X.T @ X)
    cov_type = cov
    if cov == "auto":
        cov_type = "clustered" if cl_codes is not None else "HC0"
    if cov_type == "clustered":
        if cl_codes is None:
            raise RegressionError("clustered covariance requires spec.cluster")
        v, n_clusters = cluster_cov(X, resid, cl_codes, xtx_inv)
    elif cov_type == "HC0":
        meat = (X * resid[:, None] ** 2).T @ X
        v = xtx_inv @ meat @ xtx_inv
        n_clusters = None
    elif cov_type == "classical":
        dof = max(n - k, 1)
        v = xtx_inv * float((resid**2).sum()) / dof
        n_clusters = None
    else:
        raise RegressionError(f"unknown covariance type {cov!r}")

    return FitResult(
        coefficients=dict(zip(names, beta)),
        covariance=v,
        names=names,
        n_obs=n,
        n_dropped=n_dropped,
        r_squared=r2,
        n_clusters=n_clusters,
        residuals=resid,
        cov_type=cov_type,
    )


def cluster_cov(X: np.ndarray, resid: np.ndarray, codes: np.ndarray, xtx_inv=None):
    """One-way Liang-Zeger sandwich with the G/(G-1) * (N-1)/(N-K) factor."""
    if xtx_inv is None:
        xtx_inv = np.linalg.inv(X.T @ X)
    n, k = X.shape
    g = int(codes.max()) + 1
    if g < 2:
        raise TooFewClustersError(f"need >= 2 clusters, got {g}")
    xu = X * resid[:, None]
    sums = np.zeros((g, k))
    np.add.at(sums, codes, xu)
    meat = sums.T @ sums
    factor = g / (g - 1.0) * (n - 1.0) / max(n - k, 1)
    return factor * xtx_inv @ meat @ xtx_inv, g


def fwl_partial(spec: RegressionSpec, data: pd.DataFrame, target: str) -> float:
    """Coefficient on `target` via Frisch-Waugh-Lovell residualization:
    regress target on the remaining regressors, then the outcome on that
    residual. Equals fit(spec).coefficients[target] to machine precision."""
    all_names = list(spec.regressors) + [
        _interaction_name(t) for t in spec.interactions
    ]
    if target not in all_names:
        raise RegressionError(f"target {target!r} is not a regressor of the spec")
    X, y, names, fe_codes, _, _ = _build_design(spec, data)
    if fe_codes is not None:
        y = _demean_within(y[:, None], fe_codes)[:, 0]
        X = _demean_within(X, fe_codes)
    elif spec.include_intercept:
        X = np.column_stack([np.ones(len(y)), X])
        names = ["(intercept)"] + names
    j = names.index(target)
    others = np.delete(X, j, axis=1)
    t = X[:, j]
    if others.shape[1]:
        g, *_ = np.linalg.lstsq(others, t, rcond=None)
        t_resid = t - others @ g
    else:
        t_resid = t
    denom = float(t_resid @ t_resid)
    if denom == 0.0:
        raise RankDeficientError([target])
    return float(t_resid @ y) / denom


# ---------------------------------------------------------------------------
# spec templates

_PARENT_COL = {"father": "y_father", "mother": "y_mother"}
_GP_COL = {"paternal": "y_gp_pat_avg", "maternal": "y_gp_mat_avg"}

SCHOOL_STAGE_BINS = {
    # cohort bins of the staged crisis design
    "stage_upper": (1979, 1982),
    "stage_lower": (1983, 1985),
    "stage_primary": (1986, 1988),
}


def with_stage_dummies(data: pd.DataFrame) -> pd.DataFrame:
    """Materialize the school-stage cohort dummies from `cohort`."""
    if "cohort" not in data.columns:
        raise SchemaMismatchError("stage dummies need a 'cohort' column")
    out = data.copy()
    for name, (lo, hi) in SCHOOL_STAGE_BINS.items():
        out[name] = ((out["cohort"] >= lo) & (out["cohort"] <= hi)).astype(float)
    return out


def build_spec(template: str, **params) -> RegressionSpec:
    """Emit the regressor/interaction lists of one named specification.

    Templates: pairwise(k), multigen, multigen_chain, multigen_lineage
    (parent, gp_lineage), interaction_family_choice,
    interaction_expenditure, crisis_did (binning="pooled"|"by_school_stage").
    """
    cluster = params.pop("cluster", None)
    if template == "pairwise":
        k = int(params.pop("k", 1))
        _no_extras(template, params)
        if k == 1:
            reg = ("y_parents_avg",)
        elif k == 2:
            reg = ("y_gp_avg",)
        else:
            raise SchemaMismatchError(f"pairwise supports k in (1, 2), got {k}")
        return RegressionSpec("y_child", reg, cluster=cluster)
    if template == "multigen":
        _no_extras(template, params)
        return RegressionSpec(
            "y_child", ("y_parents_avg", "y_gp_avg"), cluster=cluster or "family_id"
        )
    if template == "multigen_chain":
        _no_extras(template, params)
        # one-parent simulated chains: single lineage, stored in the paternal slots
        return RegressionSpec("y_child", ("y_father", "y_pat_gf"), cluster=cluster)
    if template == "multigen_lineage":
        parent = params.pop("parent", "father")
        gp_lineage = params.pop("gp_lineage", "paternal")
        _no_extras(template, params)
        if parent not in _PARENT_COL or gp_lineage not in _GP_COL:
            raise SchemaMismatchError(
                f"multigen_lineage(parent={parent!r}, gp_lineage={gp_lineage!r})"
            )
        return RegressionSpec(
            "y_child",
            (_PARENT_COL[parent], _GP_COL[gp_lineage]),
            cluster=cluster or "family_id",
        )
    if template == "interaction_family_choice":
        _no_extras(template, params)
        return RegressionSpec(
            "y_child",
            ("y_parents_avg", "y_gp_avg", "family_choice"),
            interactions=(
                ("y_parents_avg", "family_choice"),
                ("y_gp_avg", "family_choice"),
            ),
            cluster=cluster or "family_id",
        )
    if template == "interaction_expenditure":
        col = params.pop("column", "exp_share")
        _no_extras(template, params)
        return RegressionSpec(
            "y_child",
            ("y_parents_avg", "y_gp_avg", col),
            interactions=(("y_parents_avg", col), ("y_gp_avg", col)),
            cluster=cluster or "family_id",
        )
    if template == "crisis_did":
        binning = params.pop("binning", "pooled")
        _no_extras(template, params)
        if binning == "pooled":
            posts = ("post",)
        elif binning == "by_school_stage":
            posts = tuple(SCHOOL_STAGE_BINS)
        else:
            raise SchemaMismatchError(f"unknown crisis_did binning {binning!r}")
        regressors = ["y_parents_avg", "y_gp_avg", *posts]
        inter = []
        for pcol in posts:
            inter += [
                ("y_parents_avg", pcol),
                ("y_gp_avg", pcol),
                ("y_parents_avg", pcol, "crisis"),
                ("y_gp_avg", pcol, "crisis"),
                (pcol, "crisis"),
            ]
        inter += [("y_parents_avg", "crisis"), ("y_gp_avg", "crisis")]
        return RegressionSpec(
            "y_child",
            tuple(regressors),
            interactions=tuple(inter),
            fixed_effects="region_id",
            cluster=cluster or "cluster_id",
        )
    raise SchemaMismatchError(f"unknown spec template {template!r}")


def _no_extras(template, params):
    if params:
        raise SchemaMismatchError(
            f"unexpected parameters for {template!r}: {sorted(params)}"
        )
