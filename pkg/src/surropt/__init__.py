"""Surrogate-marker analysis toolkit: optimal surrogate transformation,
proportion of treatment effect explained, relative power, resampling
inference, future-trial design and a simulation harness."""

from .data import AnalysisConfig, TrialDataset, TrialRecord, arm_values, load_dataset
from .kernel import KernelConfig, bandwidth, density_ratio, kde, nw_regress
from .transform import (
    CurveSet,
    Interval,
    SupportPartition,
    TransformEstimate,
    build_transform,
    constraint_residual,
    curves_from_functions,
    estimate_curves,
    estimate_partition,
    evaluate_g,
    evaluate_g_masked,
    fit_transform,
    oracle_gopt,
    partition_from_bounds,
    solve_lambda_c,
)
from .effects import (
    EffectEstimate,
    SurrogacyDiagnostics,
    check_conditions,
    estimate_effects,
    pte,
    reference_distribution,
    surrogate_effect,
    treatment_effect,
)
from .power import (
    DesignResult,
    PowerInputs,
    design_from_effects,
    power,
    relative_power,
    solve_sample_size,
    solve_sample_size_ci,
)
from .resample import (
    CvAnalysis,
    CvPlan,
    PerturbationScheme,
    ResampleReport,
    cv_estimate,
    make_cv_plan,
    perturb_estimate,
)
from .simulate import (
    SimulationSetting,
    StudySummary,
    TruthResult,
    calibrate_threshold,
    generate,
    make_setting,
    monte_carlo_truth,
    perfect_surrogate_setting,
    run_study,
)
from .comparators import FreedmanFit, pte_freedman

__version__ = "0.1.0"
