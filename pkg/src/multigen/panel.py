"""Canonical three-generation panel schema and CSV round-trip.

Schema version "mg-panel/1". One row per child; outcome columns carry the
standardized scores (or years of education in ingestion mode). Empty cell
means missing; no numeric sentinels.
"""

from __future__ import annotations

import json
import os

import numpy as np
import pandas as pd

SCHEMA_VERSION = "mg-panel/1"

REQUIRED_COLUMNS = [
    "family_id",
    "child_id",
    "y_child",
    "y_father",
    "y_mother",
    "y_pat_gf",
    "y_pat_gm",
    "y_mat_gf",
    "y_mat_gm",
]

OPTIONAL_COLUMNS = [
    "gender_child",
    "cohort",
    "region_id",
    "cluster_id",
    "family_choice",
    "post",
    "crisis",
    "exp_share",
    # endowment diagnostics, emitted by the simulators
    "e_child",
    "e_father",
    "e_mother",
    "e_pat_gf",
    "e_pat_gm",
    "e_mat_gf",
    "e_mat_gm",
]

# recomputed on load, never trusted from file
DERIVED_COLUMNS = ["y_parents_avg", "y_gp_avg", "y_gp_pat_avg", "y_gp_mat_avg"]

OUTCOME_COLUMNS = [
    "y_child", "y_father", "y_mother",
    "y_pat_gf", "y_pat_gm", "y_mat_gf", "y_mat_gm",
]

_BOOL_COLUMNS = ("family_choice", "post")
_YEARS_RANGE = (0.0, 22.0)


class PanelError(ValueError):
    pass


class HeaderMismatchError(PanelError):
    pass


class EmptyPanelError(PanelError):
    pass


def ensure_derived(df: pd.DataFrame) -> pd.DataFrame:
    """Recompute the average columns in place (NaN-free rows only get values
    when every input of the average is present)."""
    df["y_parents_avg"] = (df["y_father"] + df["y_mother"]) / 2.0
    df["y_gp_pat_avg"] = (df["y_pat_gf"] + df["y_pat_gm"]) / 2.0
    df["y_gp_mat_avg"] = (df["y_mat_gf"] + df["y_mat_gm"]) / 2.0
    df["y_gp_avg"] = (
        df["y_pat_gf"] + df["y_pat_gm"] + df["y_mat_gf"] + df["y_mat_gm"]
    ) / 4.0
    return df


def read_panel(path, mode: str = "Standardized") -> pd.DataFrame:
    """Read a panel CSV, validate it, and recompute derived columns.

    mode "YearsOfEducation" enforces the [0, 22] range on outcome columns;
    offending rows are excluded and counted in df.attrs["validation"].
    """
    if mode not in ("Standardized", "YearsOfEducation"):
        raise PanelError(f"unknown read mode {mode!r}")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    df = pd.read_csv(path, dtype={"family_id": str, "child_id": str,
                                  "region_id": str, "cluster_id": str},
                     float_precision="round_trip")
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise HeaderMismatchError(f"missing required columns: {missing}")
    unknown = [
        c for c in df.columns
        if c not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS + DERIVED_COLUMNS
    ]
    if unknown:
        raise HeaderMismatchError(f"unknown columns: {unknown}")
    if len(df) == 0:
        raise EmptyPanelError(f"{path} has a header but no rows")

    report = {"n_read": len(df), "n_excluded": 0, "violations": []}
    bad = pd.Series(False, index=df.index)
    for col in OUTCOME_COLUMNS:
        vals = df[col]
        nonfinite = vals.notna() & ~np.isfinite(vals.astype(float))
        if nonfinite.any():
            report["violations"].append((col, "non-finite", int(nonfinite.sum())))
            bad |= nonfinite
        if mode == "YearsOfEducation":
            lo, hi = _YEARS_RANGE
            out = vals.notna() & ((vals < lo) | (vals > hi))
            if out.any():
                report["violations"].append((col, "outside [0, 22]", int(out.sum())))
                bad |= out
    if df["child_id"].duplicated().any():
        dup = df["child_id"].duplicated(keep=False)
        report["violations"].append(("child_id", "duplicate", int(dup.sum())))
        bad |= dup
    report["n_excluded"] = int(bad.sum())
    df = df.loc[~bad].reset_index(drop=True)
    if len(df) == 0:
        raise EmptyPanelError(f"{path}: every row failed validation")

    for col in _BOOL_COLUMNS:
        if col in df.columns:
            df[col] = df[col].astype(float).astype(bool)
    ensure_derived(df)
    df.attrs["validation"] = report
    return df


def write_panel(df: pd.DataFrame, path) -> None:
    """Write the panel with deterministic column order and 17-significant-digit
    floats so numeric round trips are exact. All-missing optional columns
    are omitted from the header."""
    cols = [c for c in REQUIRED_COLUMNS if c in df.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise PanelError(f"panel lacks required columns: {missing}")
    for c in OPTIONAL_COLUMNS + DERIVED_COLUMNS:
        if c in df.columns and not df[c].isna().all():
            cols.append(c)
    out = df[cols].copy()
    for c in _BOOL_COLUMNS:
        if c in out.columns:
            out[c] = out[c].astype(int)
    out.to_csv(path, index=False, float_format="%.17g")


def write_meta(path, meta: dict) -> str:
    """Write the .meta.json sidecar next to a panel CSV; returns its path."""
    base, _ = os.path.splitext(str(path))
    meta_path = base + ".meta.json"
    payload = {"schema": SCHEMA_VERSION, **meta}
    with open(meta_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta_path
