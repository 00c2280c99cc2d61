"""One-sided testing power, the relative-power surrogacy measure, and
future-trial sample-size solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import (
    InfeasibleTarget,
    InvalidParameters,
    NoFeasibleN,
    NonpositiveSurrogateEffect,
)


@dataclass(frozen=True)
class PowerInputs:
    """Standardised effect sizes and the shared design constants."""

    effect_y: float
    effect_g: float
    n_bar: int
    critical_z: float = 1.96

    def __post_init__(self):
        if self.n_bar < 1:
            raise InvalidParameters("n_bar must be at least 1")
        if not self.critical_z > 0:
            raise InvalidParameters("critical_z must be positive")


def power(effect, n, z: float = 1.96):
    """Probability that a one-sided z-test at critical value ``z`` rejects,
    for standardised effect size ``effect`` and sample size ``n``."""
    effect = np.asarray(effect, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(n < 1):
        raise InvalidParameters("sample size must be at least 1")
    out = 1.0 - ndtr(z - np.sqrt(n) * effect)
    return float(out) if out.ndim == 0 else out


def relative_power(effect_g, effect_y, n1, n2, z: float = 1.96):
    """Power using the surrogate effect at n1 relative to power using the
    outcome effect at n2."""
    num = power(effect_g, n1, z)
    den = power(effect_y, n2, z)
    return num / den


def solve_sample_size(
    effect_g: float,
    effect_y: float,
    n_bar: int,
    rho: float,
    z: float = 1.96,
) -> int:
    """Smallest n whose surrogate-based power reaches ``rho`` times the
    outcome-based power at ``n_bar``.

    The closed form inverts the normal tail; the boundary is then verified
    by direct evaluation so rounding can never break minimality.
    """
    if effect_g <= 0:
        raise NonpositiveSurrogateEffect(
            f"surrogate effect size {effect_g} is not positive"
        )
    target = rho * power(effect_y, n_bar, z)
    if target >= 1.0:
        raise InfeasibleTarget(
            f"target power {target:.4f} is not attainable (must be < 1)"
        )
    if target <= 0.0:
        raise InfeasibleTarget(f"target power {target:.4f} must be positive")
    root = (z - ndtri(1.0 - target)) / effect_g
    n_star = max(1, math.ceil(root * root)) if root > 0 else 1
    while power(effect_g, n_star, z) < target:
        n_star += 1
    while n_star > 1 and power(effect_g, n_star - 1, z) >= target:
        n_star -= 1
    return n_star


@dataclass(frozen=True)
class DesignResult:
    """Solved future-trial size against a stated target."""

    n_star: int
    target_kind: str  # "rp_target" or "ci_floor"
    target_value: float
    alpha: float
    achieved: float
    n_bar: int
    achieved_below: float | None = None  # value at n_star - 1, if evaluated
    rp_point: float | None = None
    rp_se: float | None = None

    def to_dict(self) -> dict:
        return {
            "n_star": self.n_star,
            "target_kind": self.target_kind,
            "target_value": self.target_value,
            "alpha": self.alpha,
            "achieved": self.achieved,
            "achieved_below": self.achieved_below,
            "n_bar": self.n_bar,
            "rp_point": self.rp_point,
            "rp_se": self.rp_se,
        }


def design_from_effects(
    effect_g: float,
    effect_y: float,
    n_bar: int,
    rho: float,
    z: float = 1.96,
) -> DesignResult:
    """Point-estimate design: relative power at (n_star, n_bar) meets rho."""
    n_star = solve_sample_size(effect_g, effect_y, n_bar, rho, z)
    achieved = relative_power(effect_g, effect_y, n_star, n_bar, z)
    below = (relative_power(effect_g, effect_y, n_star - 1, n_bar, z)
             if n_star > 1 else None)
    return DesignResult(
        n_star=n_star, target_kind="rp_target", target_value=rho,
        alpha=float("nan"), achieved=float(achieved),
        achieved_below=None if below is None else float(below), n_bar=n_bar,
    )


def solve_sample_size_ci(
    analysis,
    n_bar: int,
    kappa: float,
    alpha: float = 0.05,
    max_n: int = 10**6,
    z: float = 1.96,
) -> DesignResult:
    """Smallest future-trial n whose one-sided lower confidence bound on the
    relative power against the existing trial at ``n_bar`` clears ``kappa``.

    ``analysis`` is a fitted CvAnalysis; its perturbation draws are reused
    across all candidate sizes so the scan is deterministic and stable.
    """
    if kappa <= 0:
        raise InvalidParameters("kappa must be positive")
    z_alpha = float(ndtri(1.0 - alpha))
    from .resample import _IQR_TO_SD

    def lower_bound(n_star: int) -> tuple[float, float, float]:
        point, draws = analysis.rp_point_and_draws(n_star, n_bar, z)
        good = draws[np.isfinite(draws)]
        q75, q25 = np.quantile(good, [0.75, 0.25])
        se = float((q75 - q25) / _IQR_TO_SD)
        return point - z_alpha * se, point, se

    lb_max, _, _ = lower_bound(max_n)
    if lb_max < kappa:
        raise NoFeasibleN(
            f"lower bound at n={max_n} is {lb_max:.4f} < kappa={kappa}"
        )
    lo, hi = 1, max_n
    lb_lo, _, _ = lower_bound(lo)
    if lb_lo >= kappa:
        hi = lo
    while lo < hi:
        mid = (lo + hi) // 2
        lb_mid, _, _ = lower_bound(mid)
        if lb_mid >= kappa:
            hi = mid
        else:
            lo = mid + 1
    n_star = hi
    # the bound need not be perfectly monotone; enforce minimality locally
    while n_star > 1 and lower_bound(n_star - 1)[0] >= kappa:
        n_star -= 1
    while lower_bound(n_star)[0] < kappa:
        n_star += 1
        if n_star > max_n:
            raise NoFeasibleN(f"no feasible size at or below {max_n}")
    achieved, point, se = lower_bound(n_star)
    below = lower_bound(n_star - 1)[0] if n_star > 1 else None
    return DesignResult(
        n_star=n_star, target_kind="ci_floor", target_value=kappa,
        alpha=alpha, achieved=float(achieved),
        achieved_below=None if below is None else float(below),
        n_bar=n_bar, rp_point=float(point), rp_se=se,
    )
