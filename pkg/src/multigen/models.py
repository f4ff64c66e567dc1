"""Structural parameter types and steady-state variance algebra.

The transmission process for the one-parent ("chain") model variants is

    y_t = gamma * y_{t-1} + rho * e_t + u_t
    e_t = lam * e_{t-1} + v_t

with Var(e) normalized to one. The two-parent assortative-mating variants
replace the endowment recursion by an average over both parents and are
handled through the pedigree covariance machinery (see pedigree.py); they
have no single-chain steady state and reject Var(y) queries here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum


class Variant(str, Enum):
    SIMPLIFIED_BT = "SimplifiedBT"
    ORIGINAL_BT = "OriginalBT"
    LATENT_FACTOR = "LatentFactor"
    LF_DIRECT_AM = "LatentFactorDirectAM"
    LF_FAMILY_AM = "LatentFactorFamilyAM"


CHAIN_VARIANTS = (Variant.SIMPLIFIED_BT, Variant.ORIGINAL_BT, Variant.LATENT_FACTOR)
AM_VARIANTS = (Variant.LF_DIRECT_AM, Variant.LF_FAMILY_AM)


class ModelError(ValueError):
    """Base class for structural-model errors."""


class NonStationaryError(ModelError):
    """Raised when the parameter combination has no steady state."""


class InfeasibleSigmaError(ModelError):
    """Unit-variance normalization would require a negative noise variance.

    Carries the deficit (the negative sigma^2 that would be needed).
    """

    def __init__(self, deficit: float):
        self.deficit = deficit
        super().__init__(
            f"unit Var(y) requires sigma2_u = {deficit:.6g} < 0; "
            "parameters imply Var(y) > 1 even with zero noise"
        )


def _check_stationary(gamma: float, lam: float) -> None:
    if gamma >= 1.0 or gamma * lam >= 1.0:
        raise NonStationaryError(
            f"no steady state: need gamma < 1 and gamma*lambda < 1 "
            f"(got gamma={gamma}, lambda={lam})"
        )


def steady_state_var_y(p: "ModelParams") -> float:
    """Stationary Var(y) for the chain variants.

    Var(y) = (rho^2 + sigma^2 + 2*gamma*rho^2*lam/(1-gamma*lam)) / (1-gamma^2)
    """
    if p.variant not in CHAIN_VARIANTS:
        raise ModelError(
            f"{p.variant.value} has no single-chain Var(y); "
            "use the pedigree covariance route"
        )
    _check_stationary(p.gamma, p.lam)
    g, l, r, s2 = p.gamma, p.lam, p.rho, p.sigma2_u
    return (r**2 + s2 + 2.0 * g * r**2 * l / (1.0 - g * l)) / (1.0 - g**2)


def solve_sigma2_for_unit_var(gamma: float, lam: float, rho: float) -> float:
    """Noise variance sigma2_u that makes steady-state Var(y) = 1.

    Inverts the Var(y) formula; raises InfeasibleSigmaError when the
    implied variance is negative.
    """
    _check_stationary(gamma, lam)
    s2 = (1.0 - gamma**2) - rho**2 - 2.0 * gamma * rho**2 * lam / (1.0 - gamma * lam)
    if s2 < 0.0:
        raise InfeasibleSigmaError(s2)
    return s2


@dataclass(frozen=True)
class ModelParams:
    """Parameter bundle defining one transmission process.

    For AM variants `lam` is the average-parental transferability (lambda
    tilde); for one-parent variants it is the ordinary lambda. `m` is the
    assortative matching strength and must be zero for non-AM variants.
    """

    variant: Variant
    gamma: float
    lam: float
    rho: float
    m: float = 0.0
    sigma2_u: float = 0.0
    normalize_y: bool = False

    def __post_init__(self):
        v = Variant(self.variant)
        object.__setattr__(self, "variant", v)
        if not 0.0 <= self.gamma < 1.0:
            raise ModelError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 < self.lam <= 1.0:
            raise ModelError(f"lambda must be in (0, 1], got {self.lam}")
        if not 0.0 < self.rho <= 1.0:
            raise ModelError(f"rho must be in (0, 1], got {self.rho}")
        if self.gamma * self.lam >= 1.0:
            raise NonStationaryError(
                f"gamma*lambda = {self.gamma * self.lam} >= 1"
            )
        if v in AM_VARIANTS:
            if not 0.0 <= self.m <= 1.0:
                raise ModelError(f"m must be in [0, 1], got {self.m}")
            if self.gamma != 0.0:
                raise ModelError(f"{v.value} has no direct effect; gamma must be 0")
        else:
            if self.m != 0.0:
                raise ModelError(
                    f"m={self.m} is meaningless for {v.value}; pass m=0"
                )
            if v is Variant.LATENT_FACTOR and self.gamma != 0.0:
                raise ModelError("LatentFactor has no direct effect; gamma must be 0")
        if self.sigma2_u < 0.0:
            raise ModelError(f"sigma2_u must be >= 0, got {self.sigma2_u}")
        if v is Variant.SIMPLIFIED_BT:
            if self.sigma2_u != 0.0:
                raise ModelError("SimplifiedBT has no outcome noise; sigma2_u must be 0")
        elif self.normalize_y:
            if v in AM_VARIANTS:
                # Var(y) = rho^2 + sigma2 with Var(e) = 1
                s2 = 1.0 - self.rho**2
                if s2 < 0.0:
                    raise InfeasibleSigmaError(s2)
            else:
                s2 = solve_sigma2_for_unit_var(self.gamma, self.lam, self.rho)
            object.__setattr__(self, "sigma2_u", s2)

    @property
    def is_am(self) -> bool:
        return self.variant in AM_VARIANTS

    @property
    def is_chain(self) -> bool:
        return self.variant in CHAIN_VARIANTS

    def to_config(self) -> dict:
        return {
            "variant": self.variant.value,
            "gamma": self.gamma,
            "lambda": self.lam,
            "rho": self.rho,
            "m": self.m,
            "sigma2_u": self.sigma2_u,
            "normalize_y": self.normalize_y,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "ModelParams":
        known = {"variant", "gamma", "lambda", "rho", "m", "sigma2_u", "normalize_y"}
        unknown = set(cfg) - known
        if unknown:
            raise ModelError(f"unknown model config keys: {sorted(unknown)}")
        if "variant" not in cfg:
            raise ModelError("model config requires a 'variant' key")
        return cls(
            variant=Variant(cfg["variant"]),
            gamma=float(cfg.get("gamma", 0.0)),
            lam=float(cfg["lambda"]),
            rho=float(cfg.get("rho", 1.0)),
            m=float(cfg.get("m", 0.0)),
            sigma2_u=float(cfg.get("sigma2_u", 0.0)),
            normalize_y=bool(cfg.get("normalize_y", False)),
        )


@dataclass(frozen=True)
class SteadyState:
    """Stationary second moments of the chain process (Var(e) = 1)."""

    var_y: float
    cov_ey: float
    var_e: float = 1.0


def steady_state(p: ModelParams) -> SteadyState:
    """Full steady state for a chain variant: Var(y), Cov(e, y)."""
    vy = steady_state_var_y(p)
    cov = p.rho / (1.0 - p.gamma * p.lam)
    return SteadyState(var_y=vy, cov_ey=cov)
