"""Treatment effects on the outcome and on the transformed surrogate,
influence-function variances, the proportion of treatment effect explained,
and the dominance diagnostics that keep that proportion inside [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .data import TrialDataset
from .errors import NullPrimaryEffect, TooManyExcluded
from .kernel import KernelConfig, bandwidth, kde, kernel_weights
from .transform import (
    CurveSet,
    SupportPartition,
    TransformEstimate,
    _integrate,
    evaluate_g_masked,
    solve_lambda_c,
)

_GAUSS_ROUGHNESS = 1.0 / (2.0 * np.sqrt(np.pi))


class EffectTriple(NamedTuple):
    delta: float
    sigma2: float
    psi: np.ndarray


def _effect_core(x, a, v, include=None):
    """Arm means, difference, influence values and its second moment.

    ``x`` may be (n,) or (n, B); ``v`` likewise.  Excluded subjects get zero
    weight and NaN influence.  The influence weight n/n_a generalises the
    balanced-design factor 2 and keeps the centering identity exact.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1 and np.asarray(v).ndim == 1
    x2 = x[:, None] if x.ndim == 1 else x
    v2 = np.asarray(v, dtype=float)
    v2 = v2[:, None] if v2.ndim == 1 else v2
    v2 = np.broadcast_to(v2, (x2.shape[0], max(x2.shape[1], v2.shape[1]))).copy()
    x2 = np.broadcast_to(x2, v2.shape).copy()
    if include is not None:
        v2[~include] = 0.0
        x2[~include] = 0.0
    is1 = (a == 1)[:, None]
    sv1 = np.where(is1, v2, 0.0).sum(axis=0)
    sv0 = np.where(~is1, v2, 0.0).sum(axis=0)
    sv = sv1 + sv0
    mu1 = np.where(is1, v2 * x2, 0.0).sum(axis=0) / sv1
    mu0 = np.where(~is1, v2 * x2, 0.0).sum(axis=0) / sv0
    arm_weight = np.where(is1, sv / sv1, sv / sv0)
    sign = np.where(is1, 1.0, -1.0)
    psi = arm_weight * (x2 - np.where(is1, mu1, mu0)) * sign
    sigma2 = (v2 * psi * psi).sum(axis=0) / sv
    if include is not None:
        psi = np.where(include[:, None], psi, np.nan)
    delta = mu1 - mu0
    if squeeze:
        return (float(mu1[0]), float(mu0[0]), float(delta[0]),
                float(sigma2[0]), psi[:, 0])
    return mu1, mu0, delta, sigma2, psi


def treatment_effect(dataset: TrialDataset, weights=None) -> EffectTriple:
    """Difference of arm means of Y with influence values and their
    second moment."""
    v = np.ones(dataset.n) if weights is None else weights
    _, _, delta, sigma2, psi = _effect_core(dataset.y, dataset.a, v)
    return EffectTriple(delta, sigma2, psi)


def _transform_values(dataset: TrialDataset, g):
    if isinstance(g, TransformEstimate):
        return evaluate_g_masked(g, dataset.s)
    vals = np.asarray(g(dataset.s), dtype=float)
    return vals, np.isfinite(vals)


def surrogate_effect(
    dataset: TrialDataset,
    g,
    weights=None,
    exclusion_cap: float = 0.02,
) -> EffectTriple:
    """As treatment_effect with Y replaced by g(S).

    ``g`` is a fitted TransformEstimate or any callable.  Subjects outside
    the transform support are excluded (NaN influence); more than
    ``exclusion_cap`` of them is an error.
    """
    vals, inside = _transform_values(dataset, g)
    n_excluded = int((~inside).sum())
    if n_excluded > exclusion_cap * dataset.n:
        raise TooManyExcluded(n_excluded, dataset.n, exclusion_cap)
    v = np.ones(dataset.n) if weights is None else weights
    _, _, delta, sigma2, psi = _effect_core(
        vals, dataset.a, v, include=inside if n_excluded else None
    )
    return EffectTriple(delta, sigma2, psi)


def pte(delta_g: float, delta: float, sigma2: float | None = None,
        n: int | None = None, threshold: float = 1.0) -> float:
    """Ratio of the surrogate effect to the outcome effect.

    When the outcome effect is indistinguishable from zero the ratio is
    meaningless; with sigma2 and n supplied the guard is the standardised
    effect |delta| * sqrt(n / sigma2) falling below ``threshold``.
    """
    if sigma2 is not None and n is not None:
        if sigma2 > 0 and abs(delta) * np.sqrt(n / sigma2) < threshold:
            raise NullPrimaryEffect(
                "outcome effect is too close to zero to normalise by"
            )
    if delta == 0.0:
        raise NullPrimaryEffect("outcome effect is exactly zero")
    return delta_g / delta


@dataclass(frozen=True)
class EffectEstimate:
    """Outcome and transformed-surrogate effects for one dataset."""

    delta: float
    delta_g: float
    sigma2: float
    sigma2_g: float
    psi: np.ndarray
    psi_g: np.ndarray
    mu0: float
    mu1: float
    mu_g0: float
    mu_g1: float
    pte: float
    n_excluded: int = 0

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "delta_g": self.delta_g,
            "sigma": float(np.sqrt(self.sigma2)),
            "sigma_g": float(np.sqrt(self.sigma2_g)),
            "mu0": self.mu0,
            "mu1": self.mu1,
            "mu_g0": self.mu_g0,
            "mu_g1": self.mu_g1,
            "pte": self.pte,
            "n_excluded": self.n_excluded,
        }


def estimate_effects(
    dataset: TrialDataset,
    g,
    exclusion_cap: float = 0.02,
    null_effect_threshold: float = 1.0,
) -> EffectEstimate:
    """Both effect estimates plus their ratio, in one pass."""
    vals, inside = _transform_values(dataset, g)
    n_excluded = int((~inside).sum())
    if n_excluded > exclusion_cap * dataset.n:
        raise TooManyExcluded(n_excluded, dataset.n, exclusion_cap)
    ones = np.ones(dataset.n)
    mu1, mu0, delta, sigma2, psi = _effect_core(dataset.y, dataset.a, ones)
    mu_g1, mu_g0, delta_g, sigma2_g, psi_g = _effect_core(
        vals, dataset.a, ones, include=inside if n_excluded else None
    )
    ratio = pte(delta_g, delta, sigma2=sigma2, n=dataset.n,
                threshold=null_effect_threshold)
    return EffectEstimate(
        delta=delta, delta_g=delta_g, sigma2=sigma2, sigma2_g=sigma2_g,
        psi=psi, psi_g=psi_g, mu0=mu0, mu1=mu1, mu_g0=mu_g0, mu_g1=mu_g1,
        pte=ratio, n_excluded=n_excluded,
    )


# --- dominance diagnostics ---------------------------------------------------------


@dataclass(frozen=True)
class SurrogacyDiagnostics:
    """Empirical checks of the two dominance conditions.

    Condition 1: the treated-arm law of g(S) is stochastically larger.
    Condition 2: the treated-arm conditional mean of Y given g(S) dominates
    on the common transformed support.  Violations are measured beyond a
    pointwise noise band of ``band_z`` pooled standard errors.
    """

    c1_holds: bool
    c1_max_violation: float
    c2_holds: bool
    c2_max_violation: float
    u_grid: np.ndarray
    surv0: np.ndarray
    surv1: np.ndarray
    m_grid: np.ndarray
    cond0: np.ndarray
    cond1: np.ndarray
    f_new: np.ndarray | None = None
    delta_L_gap: float | None = None

    def to_dict(self) -> dict:
        return {
            "c1_holds": bool(self.c1_holds),
            "c1_max_violation": float(self.c1_max_violation),
            "c2_holds": bool(self.c2_holds),
            "c2_max_violation": float(self.c2_max_violation),
            "u_grid": self.u_grid.tolist(),
            "surv0": self.surv0.tolist(),
            "surv1": self.surv1.tolist(),
            "m_grid": self.m_grid.tolist(),
            "cond0": self.cond0.tolist(),
            "cond1": self.cond1.tolist(),
            "delta_L_gap": self.delta_L_gap,
        }


def _survival(sorted_vals: np.ndarray, u: np.ndarray) -> np.ndarray:
    return 1.0 - np.searchsorted(sorted_vals, u, side="right") / sorted_vals.size


def check_conditions(
    dataset: TrialDataset,
    g,
    cfg: KernelConfig | None = None,
    c0: float = 0.06,
    band_z: float = 2.0,
    points: int = 128,
    support_quantile: float = 0.025,
) -> SurrogacyDiagnostics:
    """Evaluate the two dominance conditions on the observed data.

    The conditional-mean comparison runs on the quantile-trimmed common
    support of the transformed values (default inner 95% per arm): at the
    raw extremes one arm has essentially a single neighbour, whose local
    residual variance estimate degenerates to zero and fabricates
    violations.
    """
    vals, inside = _transform_values(dataset, g)
    a = dataset.a[inside]
    y = dataset.y[inside]
    u = vals[inside]
    u1, u0 = u[a == 1], u[a == 0]
    y1, y0 = y[a == 1], y[a == 0]
    n1, n0 = u1.size, u0.size

    u_grid = np.linspace(u.min(), u.max(), points)
    surv1 = _survival(np.sort(u1), u_grid)
    surv0 = _survival(np.sort(u0), u_grid)
    se = np.sqrt(surv1 * (1 - surv1) / n1 + surv0 * (1 - surv0) / n0)
    c1_viol = float(np.max(np.maximum(surv0 - surv1 - band_z * se, 0.0)))

    lo = max(np.quantile(u1, support_quantile),
             np.quantile(u0, support_quantile))
    hi = min(np.quantile(u1, 1.0 - support_quantile),
             np.quantile(u0, 1.0 - support_quantile))
    if lo >= hi:
        m_grid = np.array([])
        cond1 = cond0 = np.array([])
        c2_viol = 0.0
    else:
        m_grid = np.linspace(lo, hi, points)
        h_u = bandwidth(u, c0)
        ucfg = KernelConfig(h=h_u)
        curves = []
        bands = []
        for uu, yy, n_a in ((u0, y0, n0), (u1, y1, n1)):
            w = kernel_weights(uu, m_grid, h_u)
            denom = w.sum(axis=1)
            cond = (w @ yy) / denom
            cond_sq = (w @ (yy * yy)) / denom
            resid_var = np.maximum(cond_sq - cond * cond, 0.0)
            dens = np.maximum(kde(uu, m_grid, ucfg), 1e-12)
            bands.append(resid_var * _GAUSS_ROUGHNESS / (n_a * h_u * dens))
            curves.append(cond)
        cond0, cond1 = curves
        se2 = np.sqrt(bands[0] + bands[1])
        c2_viol = float(np.max(np.maximum(cond0 - cond1 - band_z * se2, 0.0)))

    return SurrogacyDiagnostics(
        c1_holds=c1_viol == 0.0,
        c1_max_violation=c1_viol,
        c2_holds=c2_viol == 0.0,
        c2_max_violation=c2_viol,
        u_grid=u_grid,
        surv0=surv0,
        surv1=surv1,
        m_grid=m_grid,
        cond0=cond0,
        cond1=cond1,
    )


def reference_distribution(curves: CurveSet, partition: SupportPartition):
    """Implied reference distribution over the overlap and the induced gap.

    Returns the cumulative reference distribution on the curve grid and the
    difference between the transformed-surrogate effect and the residual
    -treatment-effect contrast taken against that reference.  The gap is
    zero when the control-only region is empty or when the two conditional
    means agree at the junction.
    """
    sol = solve_lambda_c(curves, partition)
    grid, regions = curves.grid, curves.regions
    mass_dc = float(_integrate(curves.f0, grid, regions.dc))
    if regions.d0 is not None:
        denom = sol.k2 + sol.k1 * float(curves.r[regions.s_star])
    else:
        denom = sol.k2
    density = np.zeros(grid.size)
    i0, i1 = regions.dc
    density[i0:i1 + 1] = curves.f0[i0:i1 + 1] * (mass_dc / denom)
    f_new = cumulative_trapezoid(density, grid, initial=0.0)

    def _nan_integral(values, rng):
        vals = np.nan_to_num(values, nan=0.0)
        return float(_integrate(vals, grid, rng))

    delta_curves = (
        _nan_integral(curves.m1 * curves.f1, regions.omega1)
        - _nan_integral(curves.m0 * curves.f0, regions.omega0)
    )
    delta_rte = _nan_integral((curves.m1 - curves.m0) * density, regions.dc)
    delta_L = delta_curves - delta_rte

    # transformed-surrogate effect: the control-arm side reduces exactly to
    # the control mean by the fitting constraint; the treated-side ratio
    # mass is integrated region by region with one-sided boundary values
    # (hard support edges make the ratio jump at region boundaries)
    rf1 = np.nan_to_num(curves.r * curves.f1, nan=0.0)
    ratio_mass = float(_integrate(rf1, grid, regions.dc))
    for lo, hi in regions.d1:
        seg = rf1[lo:hi + 1].copy()
        if lo == regions.dc[1]:      # piece sits above the overlap
            seg[0] = seg[1]
        elif hi == regions.dc[0]:    # piece sits below the overlap
            seg[-1] = seg[-2]
        ratio_mass += float(np.trapezoid(seg, grid[lo:hi + 1]))
    delta_g = (
        _nan_integral(curves.m1 * curves.f1, regions.omega1)
        + sol.lam * ratio_mass
        - _nan_integral(curves.m0 * curves.f0, regions.omega0)
    )
    gap = delta_g - delta_L
    return f_new, float(gap)
