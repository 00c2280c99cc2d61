"""Synthetic two-arm trial generators, population ground truth, threshold
calibration, and the replication harness that tabulates bias, spread and
coverage of the cross-validated estimators.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .comparators import pte_freedman
from .data import AnalysisConfig, TrialDataset
from .errors import InvalidParameters, SurroptError
from .power import power as power_fn
from .resample import (
    _TAG_DATA,
    _TAG_FOLD,
    _TAG_PERTURB,
    CvAnalysis,
    PerturbationScheme,
    make_cv_plan,
)
from .transform import (
    SupportPartition,
    constraint_residual,
    curves_from_functions,
    fit_transform,
    partition_from_bounds,
    solve_lambda_c,
    _g_on_grid,
    _integrate,
)


def derive_seed(seed: int, *key: int) -> int:
    """Stable 64-bit child seed for a (seed, key...) pair."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0])


@dataclass(frozen=True, eq=False)
class SimulationSetting:
    """One data-generating process.

    kind "threshold": the outcome is the indicator that a unit-exponential
    draw divided by an arm-specific positive link of the surrogate exceeds
    the threshold t.  kind "bernoulli_rate": the outcome is Bernoulli with
    an arm-specific rate function of the surrogate.  Marginal surrogate
    laws are scipy frozen distributions; a joint covariance (when given)
    couples the two potential surrogates without changing the marginals.
    """

    id: str
    kind: str
    dist1: object
    dist0: object
    t: float | None = None
    g1: Callable | None = None
    g0: Callable | None = None
    rate1: Callable | None = None
    rate0: Callable | None = None
    joint_mean: np.ndarray | None = None
    joint_cov: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "threshold":
            if self.t is None or not self.t > 0:
                raise InvalidParameters("threshold settings need t > 0")
            if self.g1 is None or self.g0 is None:
                raise InvalidParameters("threshold settings need both links")
        elif self.kind == "bernoulli_rate":
            if self.rate1 is None or self.rate0 is None:
                raise InvalidParameters("rate settings need both rate functions")
        else:
            raise InvalidParameters(f"unknown setting kind {self.kind!r}")

    # conditional outcome means ------------------------------------------------

    def m1(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "threshold":
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                den = 0.2 * self.g1(s)
                return np.where(den >= 0, np.exp(-self.t * den), 0.0)
        return np.clip(self.rate1(s), 0.0, 1.0)

    def m0(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "threshold":
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                den = 0.2 + 0.22 * self.g0(s)
                return np.where(den >= 0, np.exp(-self.t * den), 0.0)
        return np.clip(self.rate0(s), 0.0, 1.0)

    def f1(self, s):
        return self.dist1.pdf(s)

    def f0(self, s):
        return self.dist0.pdf(s)

    # sampling -------------------------------------------------------------------

    def draw_potential_surrogates(self, rng: np.random.Generator, n: int):
        if self.joint_cov is not None:
            both = rng.multivariate_normal(self.joint_mean, self.joint_cov, size=n)
            return both[:, 0], both[:, 1]
        s1 = self.dist1.rvs(size=n, random_state=rng)
        s0 = self.dist0.rvs(size=n, random_state=rng)
        return s1, s0

    def draw_potential_outcomes(self, rng: np.random.Generator, s1, s0):
        if self.kind == "threshold":
            e1 = rng.exponential(1.0, s1.size)
            e0 = rng.exponential(1.0, s0.size)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                y1 = (e1 / (0.2 * self.g1(s1)) > self.t).astype(float)
                y0 = (e0 / (0.2 + 0.22 * self.g0(s0)) > self.t).astype(float)
            return y1, y0
        y1 = (rng.uniform(size=s1.size) < self.m1(s1)).astype(float)
        y0 = (rng.uniform(size=s0.size) < self.m0(s0)).astype(float)
        return y1, y0

    def true_partition(self, tail: float = 1e-7) -> SupportPartition:
        def bounds(dist):
            lo, hi = dist.support()
            lo = float(lo) if np.isfinite(lo) else float(dist.ppf(tail))
            hi = float(hi) if np.isfinite(hi) else float(dist.isf(tail))
            return lo, hi

        l1, u1 = bounds(self.dist1)
        l0, u0 = bounds(self.dist0)
        return partition_from_bounds(l0, u0, l1, u1)


def make_setting(setting_id, t: float | None = None) -> SimulationSetting:
    """The five built-in generating processes, by id."""
    sid = str(setting_id)
    gamma = stats.gamma
    if sid == "1":
        return SimulationSetting(
            id=sid, kind="threshold", t=t,
            dist1=gamma(2, scale=2), dist0=gamma(9, scale=0.5),
            g1=lambda s: s, g0=lambda s: s,
        )
    if sid == "2":
        return SimulationSetting(
            id=sid, kind="threshold", t=t,
            dist1=gamma(2, scale=2), dist0=gamma(9, scale=0.5),
            g1=lambda s: s - 3.0 * np.log(s), g0=lambda s: 3.0 * np.ones_like(s),
        )
    if sid == "3":
        return SimulationSetting(
            id=sid, kind="threshold", t=t,
            dist1=gamma(5, scale=1), dist0=gamma(9, scale=0.5),
            g1=lambda s: s / 2.0, g0=lambda s: 9.0 / 11.0 + s,
        )
    if sid == "4":
        return SimulationSetting(
            id=sid, kind="threshold", t=t,
            dist1=stats.uniform(loc=1, scale=2), dist0=stats.uniform(loc=2, scale=2),
            g1=lambda s: s, g0=lambda s: s,
        )
    if sid == "5":
        return SimulationSetting(
            id=sid, kind="bernoulli_rate",
            dist1=stats.norm(loc=5, scale=np.sqrt(2)), dist0=stats.norm(loc=5, scale=1),
            rate1=lambda s: np.exp(-1.0 - 0.1 * s * s),
            rate0=lambda s: np.exp(-4.0 - 0.1 * s * s),
            joint_mean=np.array([5.0, 5.0]),
            joint_cov=np.array([[2.0, 1.0], [1.0, 1.0]]),
        )
    raise InvalidParameters(f"unknown setting id {setting_id!r}")


def perfect_surrogate_setting(shift: float = 0.5,
                              spread: float = 1.4) -> SimulationSetting:
    """Shared outcome law given the surrogate in both arms; the transformed
    surrogate then carries the whole effect.  The treated arm is wider as
    well as shifted so the control support sits strictly inside it."""
    rate = lambda s: stats.norm.cdf(s)  # noqa: E731
    return SimulationSetting(
        id="custom-perfect", kind="bernoulli_rate",
        dist1=stats.norm(loc=shift, scale=spread),
        dist0=stats.norm(loc=0, scale=1),
        rate1=rate, rate0=rate,
    )


def generate(
    setting: SimulationSetting,
    n: int,
    seed: int,
    return_potentials: bool = False,
):
    """One synthetic trial: coin-flip arms, observed triple per subject."""
    rng = np.random.default_rng(seed)
    s1, s0 = setting.draw_potential_surrogates(rng, n)
    y1, y0 = setting.draw_potential_outcomes(rng, s1, s0)
    a = rng.integers(0, 2, size=n)
    y = np.where(a == 1, y1, y0)
    s = np.where(a == 1, s1, s0)
    dataset = TrialDataset(y, s, a)
    if return_potentials:
        return dataset, {"s1": s1, "s0": s0, "y1": y1, "y0": y0}
    return dataset


# --- ground truth ---------------------------------------------------------------


@dataclass(frozen=True)
class TruthResult:
    """Population quantities of one setting, from quadrature on the
    analytic curves (or from a large smoothed sample for custom laws)."""

    delta: float
    delta_g: float
    pte: float
    sigma: float
    sigma_g: float
    lam: float
    eff_y: float
    eff_g: float
    rp_values: dict
    method: str

    def rp(self, n_bar: int, z: float = 1.96) -> float:
        if n_bar in self.rp_values:
            return self.rp_values[n_bar]
        return float(
            power_fn(self.eff_g, n_bar, z) / power_fn(self.eff_y, n_bar, z)
        )


def monte_carlo_truth(
    setting: SimulationSetting,
    n_samples: int = 200_000,
    grid_points: int = 4096,
    n_bars: tuple = (50, 100, 150),
    tail: float = 1e-7,
    z: float = 1.96,
) -> TruthResult:
    """Population effects, transformed effects and relative power.

    Settings with analytic curves are integrated by quadrature on a fine
    grid; n_samples only matters for custom laws without closed-form
    curves, where the curves are first kernel-smoothed from a sample of
    that size.
    """
    partition = setting.true_partition(tail)
    curves = curves_from_functions(
        setting.m0, setting.m1, setting.f0, setting.f1,
        partition, grid_points=grid_points,
    )
    method = "quadrature"
    grid, regions = curves.grid, curves.regions
    sol = solve_lambda_c(curves, partition)
    g = _g_on_grid(curves.m0, curves.m1, curves.r, regions, sol.lam, sol.c)

    def integral(values, rng):
        return float(_integrate(np.nan_to_num(values, nan=0.0), grid, rng))

    mu1 = integral(curves.m1 * curves.f1, regions.omega1)
    mu0 = integral(curves.m0 * curves.f0, regions.omega0)
    mu_g1 = integral(g * curves.f1, regions.omega1)
    mu_g0 = integral(g * curves.f0, regions.omega0)
    delta = mu1 - mu0
    delta_g = mu_g1 - mu_g0
    # binary outcomes: conditional variance is m(1-m)
    var_y1 = mu1 * (1.0 - mu1)
    var_y0 = mu0 * (1.0 - mu0)
    var_g1 = integral(g * g * curves.f1, regions.omega1) - mu_g1**2
    var_g0 = integral(g * g * curves.f0, regions.omega0) - mu_g0**2
    sigma2 = 2.0 * (var_y1 + var_y0)
    sigma2_g = 2.0 * (var_g1 + var_g0)
    eff_y = delta / np.sqrt(sigma2)
    eff_g = delta_g / np.sqrt(sigma2_g)
    rp_values = {
        int(nb): float(power_fn(eff_g, nb, z) / power_fn(eff_y, nb, z))
        for nb in n_bars
    }
    return TruthResult(
        delta=float(delta), delta_g=float(delta_g), pte=float(delta_g / delta),
        sigma=float(np.sqrt(sigma2)), sigma_g=float(np.sqrt(sigma2_g)),
        lam=float(sol.lam), eff_y=float(eff_y), eff_g=float(eff_g),
        rp_values=rp_values, method=method,
    )


def calibrate_threshold(
    setting_id,
    target_pte: float,
    bracket: tuple = (0.05, 20.0),
    grid_points: int = 4096,
    tol: float = 1e-8,
) -> float:
    """Threshold t at which the population effect proportion hits the target."""
    from scipy.optimize import brentq

    def objective(t):
        truth = monte_carlo_truth(
            make_setting(setting_id, t=t), grid_points=grid_points
        )
        return truth.pte - target_pte

    lo, hi = bracket
    flo, fhi = objective(lo), objective(hi)
    if flo * fhi > 0:
        raise InvalidParameters(
            f"target pte {target_pte} not bracketed on t in [{lo}, {hi}] "
            f"(pte endpoints {flo + target_pte:.4f}, {fhi + target_pte:.4f})"
        )
    return float(brentq(objective, lo, hi, xtol=tol))


# --- replication harness -----------------------------------------------------------


@dataclass
class StudySummary:
    """Aggregate of one replication study, one row per estimand."""

    setting_id: str
    reps: int
    n: int
    rows: list
    orientation_counts: dict
    n_failed: int
    runtime_s: float
    config: dict

    def to_dict(self) -> dict:
        return {
            "setting": self.setting_id,
            "reps": self.reps,
            "n": self.n,
            "rows": self.rows,
            "orientation_counts": self.orientation_counts,
            "n_failed": self.n_failed,
            "runtime_s": self.runtime_s,
            "config": self.config,
        }

    def to_markdown(self) -> str:
        header = "| estimand | true | est | ese | ase | cp |"
        sep = "|---|---|---|---|---|---|"
        lines = [header, sep]
        for row in self.rows:
            def fmt(v):
                return "" if v is None else f"{v:.3f}"
            lines.append(
                f"| {row['estimand']} | {fmt(row['truth'])} | {fmt(row['est'])} "
                f"| {fmt(row['ese'])} | {fmt(row['ase'])} | {fmt(row['cp'])} |"
            )
        meta = (
            f"\nsetting {self.setting_id}, {self.reps} replications, n={self.n}, "
            f"{self.n_failed} failed, {self.runtime_s:.1f}s; "
            f"orientations {self.orientation_counts}"
        )
        return "\n".join(lines) + meta


def _summary_row(estimand, truth_value, estimates, ses, covered):
    est = np.asarray(estimates, dtype=float)
    row = {
        "estimand": estimand,
        "truth": truth_value,
        "est": float(np.mean(est)) if est.size else None,
        "ese": float(np.std(est, ddof=1)) if est.size > 1 else None,
        "ase": float(np.mean(ses)) if ses is not None and len(ses) else None,
        "cp": (float(np.mean(covered))
               if covered is not None and len(covered) else None),
    }
    return row


def run_study(
    setting: SimulationSetting,
    reps: int,
    n: int,
    config: AnalysisConfig,
    truth: TruthResult | None = None,
    n_bars: tuple = (50, 100, 150),
    with_comparators: bool = True,
    max_fail_frac: float = 0.02,
) -> StudySummary:
    """Replicate the full cross-validated pipeline and tabulate accuracy."""
    if reps < 1:
        raise InvalidParameters("reps must be at least 1")
    if truth is None:
        truth = monte_carlo_truth(setting, n_bars=n_bars)
    start = time.time()
    pte_est, pte_se, pte_cov = [], [], []
    rp_est = {nb: [] for nb in n_bars}
    rp_se = {nb: [] for nb in n_bars}
    rp_cov = {nb: [] for nb in n_bars}
    freedman = []
    resid_ok = []
    lam_full = []
    orientation_counts: dict = {}
    n_failed = 0
    for r in range(reps):
        try:
            data = generate(setting, n, derive_seed(config.seed, _TAG_DATA, r))
            plan = make_cv_plan(
                data, config.cv_folds, derive_seed(config.seed, _TAG_FOLD, r)
            )
            scheme = PerturbationScheme(
                B=config.resample_count,
                base_seed=derive_seed(config.seed, _TAG_PERTURB, r),
            )
            analysis = CvAnalysis(data, config, plan=plan, scheme=scheme)
            pte_rep = analysis.pte_report()
            full_fit = fit_transform(data, config)
            resid, _ = constraint_residual(data, full_fit)
            sd0 = float(np.std(data.y[data.arm_mask(0)], ddof=1))
            rp_reports = {nb: analysis.rp_report(nb) for nb in n_bars}
        except SurroptError:
            n_failed += 1
            if n_failed > max(1, int(max_fail_frac * reps)):
                raise
            continue
        pte_est.append(pte_rep.point)
        pte_se.append(pte_rep.se)
        pte_cov.append(pte_rep.covers(truth.pte))
        for nb in n_bars:
            rep = rp_reports[nb]
            rp_est[nb].append(rep.point)
            rp_se[nb].append(rep.se)
            rp_cov[nb].append(rep.covers(truth.rp(nb)))
        for orient in analysis.orientations:
            orientation_counts[orient] = orientation_counts.get(orient, 0) + 1
        lam_full.append(full_fit.lam)
        resid_ok.append(abs(resid) <= 0.02 * sd0)
        if with_comparators:
            freedman.append(pte_freedman(data).pte_f)
    rows = [_summary_row("pte", truth.pte, pte_est, pte_se, pte_cov)]
    for nb in n_bars:
        rows.append(
            _summary_row(f"rp{nb}", truth.rp(nb), rp_est[nb], rp_se[nb], rp_cov[nb])
        )
    if with_comparators and freedman:
        rows.append(_summary_row("pte_freedman", None, freedman, None, None))
    rows.append(_summary_row("lambda_full", truth.lam, lam_full, None, None))
    rows.append({
        "estimand": "constraint_ok_frac",
        "truth": None,
        "est": float(np.mean(resid_ok)) if resid_ok else None,
        "ese": None, "ase": None, "cp": None,
    })
    return StudySummary(
        setting_id=setting.id,
        reps=reps,
        n=n,
        rows=rows,
        orientation_counts=orientation_counts,
        n_failed=n_failed,
        runtime_s=time.time() - start,
        config={
            "seed": config.seed,
            "B": config.resample_count,
            "K": config.cv_folds,
            "grid_points": config.grid_points,
            "undersmooth_exponent": config.undersmooth_exponent,
            "t": setting.t,
            "n_bars": list(n_bars),
        },
    )
