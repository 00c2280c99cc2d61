"""Perturbation-resampling uncertainty and K-fold cross-validated estimators.

Replicates re-compute an estimator under i.i.d. positive unit-mean random
weights (one weight per subject, shared across every stage the subject
touches).  The fold partition, support partition, grid and bandwidth are
held fixed across replicates: the perturbation targets the smooth
functionals, while fold noise is controlled separately by re-partitioned
runs.  Curve refits for all replicates are evaluated as single matrix
products against the cached kernel-weight matrices, so a full resampling
pass costs a handful of matrix multiplications.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .data import AnalysisConfig, TrialDataset
from .errors import (
    EstimatorFailure,
    FoldTooSmall,
    InvalidParameters,
    SurroptError,
    TooManyExcluded,
)
from .kernel import KernelConfig, bandwidth
from .power import power as power_fn
from .transform import (
    TransformEstimate,
    _g_on_grid,
    _masked_curves,
    _raw_curves,
    _solve_lambda_arrays,
    build_transform,
    estimate_curves,
    estimate_partition,
    evaluate_g_masked,
)
from .effects import _effect_core

_TAG_PERTURB = 1
_TAG_FOLD = 2
_TAG_STUDY = 3
_TAG_DATA = 4


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for a (seed, key...) pair; order-insensitive use."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class PerturbationScheme:
    """Weight law and replication count for perturbation resampling."""

    B: int = 500
    base_seed: int = 20240817
    distribution: str = "exponential_mean_one"

    def __post_init__(self):
        if self.distribution != "exponential_mean_one":
            raise InvalidParameters(
                f"unsupported weight distribution {self.distribution!r}"
            )
        if self.B < 0:
            raise InvalidParameters("B must be nonnegative")

    def weight_matrix(self, n: int) -> np.ndarray:
        """(n, B) weights; column b comes from its own derived stream."""
        cols = [
            derive_rng(self.base_seed, _TAG_PERTURB, b).exponential(1.0, n)
            for b in range(self.B)
        ]
        return np.stack(cols, axis=1) if cols else np.empty((n, 0))


@dataclass(frozen=True)
class ResampleReport:
    """Point estimate with resampled spread and intervals."""

    point: float
    se: float
    ci_two_sided: tuple[float, float]
    ci_percentile: tuple[float, float]
    ci_lower_one_sided: float
    draws: np.ndarray
    alpha: float
    n_failed: int = 0
    point_outside_ci: bool = False

    def covers(self, value: float) -> bool:
        lo, hi = self.ci_two_sided
        return lo <= value <= hi

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "se": self.se,
            "ci_two_sided": list(self.ci_two_sided),
            "ci_percentile": list(self.ci_percentile),
            "ci_lower_one_sided": self.ci_lower_one_sided,
            "alpha": self.alpha,
            "level": 1.0 - self.alpha,
            "methods": {"ci_two_sided": "normal", "ci_percentile": "percentile"},
            "B": int(self.draws.size + self.n_failed),
            "n_failed": self.n_failed,
        }


_IQR_TO_SD = 1.3489795003921634  # normal-distribution IQR in sd units


def make_report(point: float, draws: np.ndarray, alpha: float,
                max_fail_frac: float = 0.05, scale: str = "sd") -> ResampleReport:
    """Summarise replicate draws; non-finite replicates count as failures.

    scale "sd" is the sample standard deviation of the draws; "iqr" is the
    normal-consistent interquartile scale, preferred for ratio-type
    statistics whose perturbed draws are heavy-tailed.
    """
    draws = np.asarray(draws, dtype=float)
    ok = np.isfinite(draws)
    n_failed = int((~ok).sum())
    if draws.size and n_failed > max_fail_frac * draws.size:
        raise EstimatorFailure(n_failed, draws.size)
    good = draws[ok]
    if good.size >= 2:
        if scale == "iqr":
            q75, q25 = np.quantile(good, [0.75, 0.25])
            se = float((q75 - q25) / _IQR_TO_SD)
        else:
            se = float(np.std(good, ddof=1))
        z = float(ndtri(1.0 - alpha / 2.0))
        z_one = float(ndtri(1.0 - alpha))
        ci_norm = (point - z * se, point + z * se)
        ci_pct = tuple(np.quantile(good, [alpha / 2.0, 1.0 - alpha / 2.0]))
        lower = point - z_one * se
    else:
        se = 0.0
        ci_norm = (point, point)
        ci_pct = (point, point)
        lower = point
    outside = not (ci_pct[0] <= point <= ci_pct[1]) if good.size >= 2 else False
    return ResampleReport(
        point=float(point), se=se, ci_two_sided=ci_norm,
        ci_percentile=(float(ci_pct[0]), float(ci_pct[1])),
        ci_lower_one_sided=float(lower), draws=good, alpha=alpha,
        n_failed=n_failed, point_outside_ci=outside,
    )


def perturb_estimate(
    dataset: TrialDataset,
    estimator,
    scheme: PerturbationScheme,
    alpha: float = 0.05,
    _unit_weights: bool = False,
) -> ResampleReport:
    """Generic perturbation engine.

    ``estimator(dataset, weights)`` must return a scalar and reduce to the
    unweighted estimate at weights None or all-ones.  Failed replicates are
    dropped; more than 5% failing is an error.
    """
    point = float(estimator(dataset, None))
    weights = (np.ones((dataset.n, scheme.B)) if _unit_weights
               else scheme.weight_matrix(dataset.n))
    draws = np.empty(scheme.B)
    for b in range(scheme.B):
        try:
            draws[b] = float(estimator(dataset, weights[:, b]))
        except SurroptError:
            draws[b] = np.nan
    return make_report(point, draws, alpha)


# --- cross-validated pipeline ---------------------------------------------------


@dataclass(frozen=True)
class CvPlan:
    """Arm-stratified assignment of each record to one of K folds."""

    K: int
    fold_of: np.ndarray
    seed: int

    def fold_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def complement_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != k)


def make_cv_plan(dataset: TrialDataset, K: int, seed: int) -> CvPlan:
    """Random arm-stratified folds with sizes differing by at most one."""
    if K < 2:
        raise InvalidParameters("K must be at least 2")
    fold_of = np.empty(dataset.n, dtype=np.int64)
    offset = 0
    for arm in (0, 1):
        pos = np.flatnonzero(dataset.a == arm)
        rng = derive_rng(seed, _TAG_FOLD, arm)
        pos = rng.permutation(pos)
        fold_of[pos] = (np.arange(pos.size) + offset) % K
        offset += pos.size
    return CvPlan(K=K, fold_of=fold_of, seed=seed)


def _interp_columns(grid: np.ndarray, values: np.ndarray, pts: np.ndarray):
    """Columnwise linear interpolation of (G, B) values at points inside grid."""
    idx = np.clip(np.searchsorted(grid, pts) - 1, 0, grid.size - 2)
    t = (pts - grid[idx]) / (grid[idx + 1] - grid[idx])
    return values[idx, :] * (1.0 - t)[:, None] + values[idx + 1, :] * t[:, None]


@dataclass
class FoldResult:
    """Held-out effect estimates for one fold's fitted transform."""

    fold: int
    transform: TransformEstimate | None
    orientation: str | None
    delta: float
    delta_g: float
    sigma2: float
    sigma2_g: float
    eff_y: float
    eff_g: float
    pte: float
    n_excluded: int
    eff_y_draws: np.ndarray
    eff_g_draws: np.ndarray
    pte_draws: np.ndarray


class CvAnalysis:
    """Fit the transform per fold, evaluate effects on each complement, and
    carry one shared set of perturbation draws for every downstream report.

    ``g_override`` skips transform fitting and evaluates a fixed callable
    instead (diagnostics and tests).
    """

    def __init__(
        self,
        dataset: TrialDataset,
        config: AnalysisConfig,
        plan: CvPlan | None = None,
        scheme: PerturbationScheme | None = None,
        g_override=None,
    ):
        self.dataset = dataset
        self.config = config
        self.plan = plan or make_cv_plan(dataset, config.cv_folds, config.seed)
        self.scheme = scheme or PerturbationScheme(
            B=config.resample_count, base_seed=config.seed
        )
        self.g_override = g_override
        self._weights = self.scheme.weight_matrix(dataset.n)
        self.folds: list[FoldResult] = []
        for k in range(self.plan.K):
            self.folds.append(self._run_fold(k))

    # -- fitting ------------------------------------------------------------

    def _check_counts(self, k: int, idx: np.ndarray, side: str):
        a = self.dataset.a[idx]
        for arm in (0, 1):
            count = int((a == arm).sum())
            if count < self.config.min_fold_arm:
                raise FoldTooSmall(f"{k}:{side}", arm, count, self.config.min_fold_arm)

    def _run_fold(self, k: int) -> FoldResult:
        cfg = self.config
        idx_fit = self.plan.fold_indices(k)
        idx_eval = self.plan.complement_indices(k)
        self._check_counts(k, idx_fit, "fit")
        self._check_counts(k, idx_eval, "eval")
        B = self.scheme.B

        s_e = self.dataset.s[idx_eval]
        y_e = self.dataset.y[idx_eval]
        a_e = self.dataset.a[idx_eval]

        if self.g_override is not None:
            transform = None
            orientation = None
            g_point = np.asarray(self.g_override(s_e), dtype=float)
            inside = np.isfinite(g_point)
            g_draws = np.repeat(g_point[:, None], B, axis=1) if B else None
        else:
            ds_fit = self.dataset.subset(idx_fit)
            partition = estimate_partition(ds_fit, cfg.support_trim)
            orientation = partition.orientation
            if cfg.bandwidth_rule == "fixed":
                h = cfg.bandwidth
            else:
                h = bandwidth(ds_fit.s, cfg.undersmooth_exponent)
            kcfg = KernelConfig(h=h, rule=cfg.bandwidth_rule)
            curves = estimate_curves(
                ds_fit, partition, kcfg,
                grid_points=cfg.grid_points, floor_frac=cfg.density_floor,
            )
            transform = build_transform(curves, partition, h)
            g_point, inside = evaluate_g_masked(transform, s_e)
            if B:
                v_fit = self._weights[idx_fit, :]
                a_f = ds_fit.a
                s_by = {arm: ds_fit.s[a_f == arm] for arm in (0, 1)}
                y_by = {arm: ds_fit.y[a_f == arm] for arm in (0, 1)}
                v_by = {arm: v_fit[a_f == arm, :] for arm in (0, 1)}
                raw = _raw_curves(s_by, y_by, curves.grid, h, v_by)
                m0, m1, _, _, r, delta01, _, _ = _masked_curves(
                    raw, curves.grid, curves.regions, cfg.density_floor
                )
                lam_b, c_b, _, _ = _solve_lambda_arrays(
                    curves.grid, raw["f0"], r, delta01, curves.regions,
                    strict=False,
                )
                g_grid_b = _g_on_grid(m0, m1, r, curves.regions, lam_b, c_b)
                g_draws = np.full((s_e.size, B), np.nan)
                g_draws[inside] = _interp_columns(
                    curves.grid, g_grid_b, s_e[inside]
                )
            else:
                g_draws = None

        n_excluded = int((~inside).sum())
        if n_excluded > cfg.exclusion_cap * s_e.size:
            raise TooManyExcluded(n_excluded, s_e.size, cfg.exclusion_cap)
        include = inside if n_excluded else None

        ones = np.ones(s_e.size)
        _, _, delta, sigma2, _ = _effect_core(y_e, a_e, ones)
        _, _, delta_g, sigma2_g, _ = _effect_core(g_point, a_e, ones, include)
        eff_y = delta / np.sqrt(sigma2)
        eff_g = delta_g / np.sqrt(sigma2_g) if sigma2_g > 0 else 0.0

        if B:
            v_e = self._weights[idx_eval, :]
            _, _, delta_b, sigma2_b, _ = _effect_core(y_e, a_e, v_e)
            _, _, delta_gb, sigma2_gb, _ = _effect_core(g_draws, a_e, v_e, include)
            with np.errstate(invalid="ignore", divide="ignore"):
                eff_y_draws = delta_b / np.sqrt(sigma2_b)
                eff_g_draws = np.where(
                    sigma2_gb > 0, delta_gb / np.sqrt(sigma2_gb), 0.0
                )
                pte_draws = delta_gb / delta_b
        else:
            eff_y_draws = eff_g_draws = pte_draws = np.empty(0)

        return FoldResult(
            fold=k, transform=transform, orientation=orientation,
            delta=float(delta), delta_g=float(delta_g),
            sigma2=float(sigma2), sigma2_g=float(sigma2_g),
            eff_y=float(eff_y), eff_g=float(eff_g),
            pte=float(delta_g / delta), n_excluded=n_excluded,
            eff_y_draws=eff_y_draws, eff_g_draws=eff_g_draws,
            pte_draws=pte_draws,
        )

    # -- aggregation ----------------------------------------------------------

    @property
    def orientations(self) -> list[str | None]:
        return [f.orientation for f in self.folds]

    def pte_point_and_draws(self):
        point = float(np.mean([f.pte for f in self.folds]))
        draws = (np.mean([f.pte_draws for f in self.folds], axis=0)
                 if self.scheme.B else np.empty(0))
        return point, draws

    def rp_point_and_draws(self, n1: int, n2: int, z: float = 1.96):
        rps = []
        rp_draws = []
        for f in self.folds:
            rps.append(power_fn(f.eff_g, n1, z) / power_fn(f.eff_y, n2, z))
            if self.scheme.B:
                with np.errstate(invalid="ignore"):
                    rp_draws.append(
                        power_fn(f.eff_g_draws, n1, z)
                        / power_fn(f.eff_y_draws, n2, z)
                    )
        point = float(np.mean(rps))
        draws = np.mean(rp_draws, axis=0) if rp_draws else np.empty(0)
        return point, draws

    def pte_report(self, alpha: float | None = None) -> ResampleReport:
        point, draws = self.pte_point_and_draws()
        return make_report(point, draws, alpha or self.config.alpha, scale="iqr")

    def rp_report(self, n_bar: int, alpha: float | None = None,
                  z: float | None = None) -> ResampleReport:
        point, draws = self.rp_point_and_draws(
            n_bar, n_bar, z or self.config.critical_z
        )
        return make_report(point, draws, alpha or self.config.alpha, scale="iqr")


def cv_estimate(
    dataset: TrialDataset,
    n_bar: int,
    plan: CvPlan,
    config: AnalysisConfig,
    g_override=None,
):
    """Cross-validated relative power and effect proportion at one n_bar.

    Returns (rp_cv, pte_cv, reports) where reports carries the full
    resampling summaries keyed "rp" and "pte".
    """
    analysis = CvAnalysis(dataset, config, plan=plan, g_override=g_override)
    rp_rep = analysis.rp_report(n_bar)
    pte_rep = analysis.pte_report()
    return rp_rep.point, pte_rep.point, {"rp": rp_rep, "pte": pte_rep}
