"""Analysis report assembly and the JSON schemas shipped with the tool."""

from __future__ import annotations

import importlib.resources
import json

import numpy as np

from .comparators import pte_freedman
from .data import AnalysisConfig, TrialDataset
from .effects import check_conditions, estimate_effects, reference_distribution
from .resample import CvAnalysis
from .transform import constraint_residual, fit_transform


def schema(name: str) -> dict:
    """Load one of the shipped JSON schemas by bare name."""
    path = importlib.resources.files("surropt.schemas").joinpath(f"{name}.schema.json")
    return json.loads(path.read_text())


def build_analysis_report(
    dataset: TrialDataset,
    config: AnalysisConfig,
    n_bars: tuple = (50, 100, 150),
    with_comparators: bool = False,
) -> dict:
    """Run the full pipeline on one dataset and assemble the JSON payload."""
    analysis = CvAnalysis(dataset, config)
    full_fit = fit_transform(dataset, config)
    resid, resid_excluded = constraint_residual(dataset, full_fit)
    effects = estimate_effects(
        dataset, full_fit,
        exclusion_cap=config.exclusion_cap,
        null_effect_threshold=config.null_effect_threshold,
    )
    diagnostics = check_conditions(
        dataset, full_fit, c0=config.undersmooth_exponent
    )
    f_new, gap = reference_distribution(full_fit.curves, full_fit.partition)
    diag_dict = diagnostics.to_dict()
    diag_dict["f_new"] = np.asarray(f_new).tolist()
    diag_dict["delta_L_gap"] = gap

    transform_dict = full_fit.to_dict()
    transform_dict["continuity_gap"] = full_fit.continuity_gap
    transform_dict["constraint_residual"] = resid
    transform_dict["constraint_excluded"] = resid_excluded

    report = {
        "config": {
            "seed": config.seed,
            "bandwidth": full_fit.h,
            "bandwidth_rule": config.bandwidth_rule,
            "undersmooth_exponent": config.undersmooth_exponent,
            "grid_points": config.grid_points,
            "support_trim": config.support_trim,
            "B": config.resample_count,
            "K": config.cv_folds,
            "alpha": config.alpha,
            "critical_z": config.critical_z,
            "n": dataset.n,
            "n0": dataset.n0,
            "n1": dataset.n1,
            "n_dropped": dataset.n_dropped,
        },
        "transform": transform_dict,
        "effects": effects.to_dict(),
        "pte_cv": analysis.pte_report().to_dict(),
        "rp_cv": {str(nb): analysis.rp_report(nb).to_dict() for nb in n_bars},
        "diagnostics": diag_dict,
        "fold_orientations": analysis.orientations,
    }
    if with_comparators:
        report["comparators"] = {"pte_freedman": pte_freedman(dataset).to_dict()}
    return report


def analysis_report_text(report: dict) -> str:
    """Short human-readable rendering of an analysis report."""
    eff = report["effects"]
    tr = report["transform"]
    lines = [
        f"n = {report['config']['n']} "
        f"(arm0 {report['config']['n0']}, arm1 {report['config']['n1']})",
        f"outcome effect      delta = {eff['delta']:.4f}  sigma = {eff['sigma']:.4f}",
        f"surrogate effect    delta_g = {eff['delta_g']:.4f}  "
        f"sigma_g = {eff['sigma_g']:.4f}",
        f"transform: lambda = {tr['lambda']:.5f}  c = "
        + (f"{tr['c']:.5f}" if tr["c"] is not None else "n/a")
        + f"  k1 = {tr['k1']:.5f}  k2 = {tr['k2']:.5f}",
        f"orientation = {tr['partition']['orientation']}  "
        f"constraint residual = {tr['constraint_residual']:.5f}",
        f"pte (full sample) = {eff['pte']:.4f}",
        f"pte (cross-validated) = {report['pte_cv']['point']:.4f} "
        f"(se {report['pte_cv']['se']:.4f})",
    ]
    for nb, rep in report["rp_cv"].items():
        lo, hi = rep["ci_two_sided"]
        lines.append(
            f"rp({nb}) = {rep['point']:.4f} (se {rep['se']:.4f}, "
            f"{100 * rep['level']:.0f}% ci [{lo:.3f}, {hi:.3f}])"
        )
    diag = report["diagnostics"]
    lines.append(
        f"dominance checks: c1 {'ok' if diag['c1_holds'] else 'VIOLATED'} "
        f"(max {diag['c1_max_violation']:.4f}), "
        f"c2 {'ok' if diag['c2_holds'] else 'VIOLATED'} "
        f"(max {diag['c2_max_violation']:.4f}), "
        f"reference gap {diag['delta_L_gap']:.2e}"
    )
    if "comparators" in report:
        lines.append(
            f"pte_freedman = {report['comparators']['pte_freedman']['pte_f']:.4f}"
        )
    return "\n".join(lines)
