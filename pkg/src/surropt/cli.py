"""Command-line front door: analyze a trial CSV, size a future trial,
run simulation studies, calibrate the generator threshold."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .data import AnalysisConfig, load_dataset
from .errors import SurroptError
from .power import design_from_effects, solve_sample_size_ci
from .report import analysis_report_text, build_analysis_report
from .resample import CvAnalysis
from .simulate import calibrate_threshold, make_setting, monte_carlo_truth, run_study

_TRANSPORT_NOTE = (
    "note: sizing a future trial from these estimates assumes the "
    "standardised surrogate effect carries over to the future population; "
    "this assumption is not checkable from the current data."
)


def _add_shared(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=20240817)
    parser.add_argument("--grid", type=int, default=512, help="grid points")
    parser.add_argument("--bandwidth", type=float, default=None,
                        help="fixed kernel bandwidth (overrides the plug-in rule)")
    parser.add_argument("--c0", type=float, default=0.06,
                        help="undersmoothing exponent")
    parser.add_argument("--B", type=int, default=500,
                        help="perturbation replicates")
    parser.add_argument("--K", type=int, default=2, help="cross-validation folds")
    parser.add_argument("--trim", type=float, default=0.0,
                        help="support quantile trim")
    parser.add_argument("--alpha", type=float, default=0.05)
    parser.add_argument("--out", type=str, default=None, help="JSON output path")


def _config(args) -> AnalysisConfig:
    return AnalysisConfig(
        bandwidth_rule="fixed" if args.bandwidth else "scott_undersmoothed",
        bandwidth=args.bandwidth,
        undersmooth_exponent=args.c0,
        grid_points=args.grid,
        support_trim=args.trim,
        resample_count=args.B,
        cv_folds=args.K,
        alpha=args.alpha,
        seed=args.seed,
    )


def _parse_n_bars(raw: str) -> tuple:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise SurroptError("empty --n-bar list")
    return tuple(int(p) for p in parts)


def _write_json(payload: dict, path: str | None):
    text = json.dumps(payload, indent=2, allow_nan=False, default=_json_default)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    raise TypeError(f"not JSON serialisable: {type(value)}")


def _sanitize(obj):
    """Replace non-finite floats so strict JSON encoding succeeds."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def cmd_analyze(args) -> int:
    dataset = load_dataset(
        args.input, col_y=args.col_y, col_s=args.col_s, col_a=args.col_a,
        strict=not args.lenient,
    )
    if dataset.n_dropped:
        print(f"dropped {dataset.n_dropped} rows with missing values",
              file=sys.stderr)
    config = _config(args)
    report = build_analysis_report(
        dataset, config,
        n_bars=_parse_n_bars(args.n_bar),
        with_comparators=args.with_comparators,
    )
    _write_json(_sanitize(report), args.out)
    print(analysis_report_text(report))
    return 0


def cmd_design(args) -> int:
    if (args.rho is None) == (args.kappa is None):
        raise SurroptError("pick exactly one of --rho or --kappa")
    if args.rho is not None:
        if args.from_report:
            with open(args.from_report) as fh:
                report = json.load(fh)
            eff = report["effects"]
            effect_y = eff["delta"] / eff["sigma"]
            effect_g = eff["delta_g"] / eff["sigma_g"]
        elif args.input:
            dataset = load_dataset(args.input, col_y=args.col_y,
                                   col_s=args.col_s, col_a=args.col_a)
            from .effects import estimate_effects
            from .transform import fit_transform
            config = _config(args)
            fit = fit_transform(dataset, config)
            eff = estimate_effects(dataset, fit)
            effect_y = eff.delta / np.sqrt(eff.sigma2)
            effect_g = eff.delta_g / np.sqrt(eff.sigma2_g)
        else:
            raise SurroptError("--rho mode needs --from-report or --input")
        result = design_from_effects(effect_g, effect_y, args.n_bar, args.rho)
    else:
        if not args.input:
            raise SurroptError("--kappa mode needs --input (resampling required)")
        dataset = load_dataset(args.input, col_y=args.col_y,
                               col_s=args.col_s, col_a=args.col_a)
        config = _config(args)
        analysis = CvAnalysis(dataset, config)
        result = solve_sample_size_ci(
            analysis, args.n_bar, args.kappa, alpha=args.alpha,
            max_n=args.max_n,
        )
    payload = result.to_dict()
    _write_json(_sanitize(payload), args.out)
    kind = "target relative power" if result.target_kind == "rp_target" \
        else "confidence floor"
    print(f"needed future-trial size n* = {result.n_star} "
          f"({kind} {result.target_value}, reference n_bar = {result.n_bar})")
    print(f"achieved {result.achieved:.4f}"
          + (f"; at n*-1: {result.achieved_below:.4f}"
             if result.achieved_below is not None else ""))
    print(_TRANSPORT_NOTE)
    return 0


def cmd_simulate(args) -> int:
    setting = make_setting(args.setting, t=args.t)
    config = _config(args)
    truth = monte_carlo_truth(setting, n_bars=_parse_n_bars(args.n_bar))
    summary = run_study(
        setting, reps=args.reps, n=args.n, config=config, truth=truth,
        n_bars=_parse_n_bars(args.n_bar),
    )
    payload = summary.to_dict()
    if args.out and args.out.endswith(".md"):
        with open(args.out, "w") as fh:
            fh.write(summary.to_markdown() + "\n")
    else:
        _write_json(_sanitize(payload), args.out)
    print(summary.to_markdown())
    return 0


def cmd_calibrate_t(args) -> int:
    t = calibrate_threshold(args.setting, args.target_pte,
                            grid_points=args.grid)
    truth = monte_carlo_truth(make_setting(args.setting, t=t))
    payload = {"setting": str(args.setting), "t": t,
               "target_pte": args.target_pte, "achieved_pte": truth.pte}
    _write_json(_sanitize(payload), args.out)
    print(f"setting {args.setting}: t = {t:.6f} gives pte = {truth.pte:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surropt",
        description="surrogate-marker transformation, effect-proportion and "
                    "relative-power analysis for two-arm trials",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analyze", help="analyse one trial CSV")
    p_an.add_argument("--input", required=True)
    p_an.add_argument("--col-y", default="y")
    p_an.add_argument("--col-s", default="s")
    p_an.add_argument("--col-a", default="a")
    p_an.add_argument("--lenient", action="store_true",
                      help="drop rows with missing values instead of failing")
    p_an.add_argument("--n-bar", default="50,100,150")
    p_an.add_argument("--with-comparators", action="store_true")
    _add_shared(p_an)
    p_an.set_defaults(func=cmd_analyze)

    p_de = sub.add_parser("design", help="size a future surrogate-based trial")
    p_de.add_argument("--from-report", default=None,
                      help="JSON report from a previous analyze run")
    p_de.add_argument("--input", default=None, help="trial CSV")
    p_de.add_argument("--col-y", default="y")
    p_de.add_argument("--col-s", default="s")
    p_de.add_argument("--col-a", default="a")
    p_de.add_argument("--n-bar", type=int, required=True)
    p_de.add_argument("--rho", type=float, default=None,
                      help="target relative power against the existing trial")
    p_de.add_argument("--kappa", type=float, default=None,
                      help="one-sided lower confidence floor for relative power")
    p_de.add_argument("--max-n", type=int, default=10**6)
    _add_shared(p_de)
    p_de.set_defaults(func=cmd_design)

    p_si = sub.add_parser("simulate", help="run a replication study")
    p_si.add_argument("--setting", required=True)
    p_si.add_argument("--reps", type=int, default=100)
    p_si.add_argument("--n", type=int, default=2000)
    p_si.add_argument("--t", type=float, default=None,
                      help="outcome threshold (settings 1-4)")
    p_si.add_argument("--n-bar", default="50,100,150")
    _add_shared(p_si)
    p_si.set_defaults(func=cmd_simulate)

    p_ca = sub.add_parser("calibrate-t",
                          help="solve the threshold for a target effect proportion")
    p_ca.add_argument("--setting", required=True)
    p_ca.add_argument("--target-pte", type=float, required=True)
    _add_shared(p_ca)
    p_ca.set_defaults(func=cmd_calibrate_t)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SurroptError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
