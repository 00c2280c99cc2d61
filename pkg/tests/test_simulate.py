import numpy as np
import pytest

from surropt import (
    AnalysisConfig,
    calibrate_threshold,
    generate,
    make_setting,
    monte_carlo_truth,
    perfect_surrogate_setting,
    run_study,
)
from surropt.errors import InvalidParameters


def test_generate_deterministic():
    setting = make_setting(1, t=1.0)
    d1 = generate(setting, 500, seed=42)
    d2 = generate(setting, 500, seed=42)
    np.testing.assert_array_equal(d1.y, d2.y)
    np.testing.assert_array_equal(d1.s, d2.s)
    np.testing.assert_array_equal(d1.a, d2.a)
    d3 = generate(setting, 500, seed=43)
    assert not np.array_equal(d1.s, d3.s)


def test_generate_binary_outcomes():
    for sid in (1, 2, 3, 4):
        ds = generate(make_setting(sid, t=1.3), 400, seed=7)
        assert set(np.unique(ds.y)) <= {0.0, 1.0}
    ds5 = generate(make_setting(5), 400, seed=7)
    assert set(np.unique(ds5.y)) <= {0.0, 1.0}


def test_gamma_surrogate_mean():
    setting = make_setting(1, t=1.0)
    ds, pot = generate(setting, 200_000, seed=11, return_potentials=True)
    # treated potential surrogate has mean shape*scale = 4
    assert pot["s1"].mean() == pytest.approx(4.0, abs=0.03)
    assert pot["s0"].mean() == pytest.approx(4.5, abs=0.03)


def test_arm_split_is_fair_coin():
    ds = generate(make_setting(1, t=1.0), 100_000, seed=3)
    assert ds.n1 / ds.n == pytest.approx(0.5, abs=0.01)


def test_setting5_analytic_moments_match_monte_carlo():
    setting = make_setting(5)
    ds, pot = generate(setting, 1_000_000, seed=19, return_potentials=True)
    # closed forms for the Gaussian-quadratic expectation
    mu1 = np.exp(-1.0) * (1.4) ** -0.5 * np.exp(-2.5 / 1.4)
    mu0 = np.exp(-4.0) * (1.2) ** -0.5 * np.exp(-2.5 / 1.2)
    for mc, target in ((pot["y1"].mean(), mu1), (pot["y0"].mean(), mu0)):
        se = np.sqrt(target * (1 - target) / 1_000_000)
        assert abs(mc - target) < 3 * se
    truth = monte_carlo_truth(setting)
    assert truth.delta == pytest.approx(mu1 - mu0, abs=1e-4)
    assert truth.delta == pytest.approx(0.0501, abs=5e-4)
    # the potential surrogates are correlated but the marginals drive truth
    assert np.corrcoef(pot["s1"], pot["s0"])[0, 1] == pytest.approx(
        1 / np.sqrt(2), abs=0.01
    )


def test_perfect_surrogate_truth():
    truth = monte_carlo_truth(perfect_surrogate_setting())
    assert truth.pte == pytest.approx(1.0, abs=1e-9)
    assert truth.lam == pytest.approx(0.0, abs=1e-9)
    assert truth.rp(50) > 1.0  # transformed surrogate is less noisy here


def test_threshold_calibration_hits_target():
    t = calibrate_threshold(1, 0.657, bracket=(0.3, 3.0), grid_points=2048)
    assert t == pytest.approx(0.8522, abs=5e-3)
    truth = monte_carlo_truth(make_setting(1, t=t))
    assert truth.pte == pytest.approx(0.657, abs=1e-3)


def test_threshold_unbracketed():
    with pytest.raises(InvalidParameters):
        calibrate_threshold(1, 0.99, bracket=(0.5, 2.0))


def test_threshold_required_for_indicator_settings():
    with pytest.raises(InvalidParameters):
        make_setting(1)
    with pytest.raises(InvalidParameters):
        make_setting(2, t=-1.0)
    with pytest.raises(InvalidParameters):
        make_setting("nope", t=1.0)


def test_run_study_smoke():
    setting = make_setting(1, t=0.8522)
    truth = monte_carlo_truth(setting, n_bars=(50,))
    cfg = AnalysisConfig(resample_count=30, seed=77, min_fold_arm=30,
                         grid_points=128)
    summary = run_study(setting, reps=4, n=600, config=cfg, truth=truth,
                        n_bars=(50,))
    names = [row["estimand"] for row in summary.rows]
    assert "pte" in names and "rp50" in names and "pte_freedman" in names
    pte_row = summary.rows[names.index("pte")]
    assert pte_row["truth"] == pytest.approx(truth.pte)
    assert pte_row["est"] is not None and 0 < pte_row["est"] < 1.5
    assert pte_row["ase"] is not None and pte_row["ase"] > 0
    assert summary.n_failed == 0
    assert sum(summary.orientation_counts.values()) == 2 * 4
    md = summary.to_markdown()
    assert "| pte |" in md
    payload = summary.to_dict()
    assert payload["reps"] == 4


def test_run_study_orientation_branches():
    # the offset-uniform setting must exercise the control-only branch
    setting4 = make_setting(4, t=2.1)
    cfg = AnalysisConfig(resample_count=10, seed=5, min_fold_arm=30,
                         grid_points=128)
    s4 = run_study(setting4, reps=3, n=600, config=cfg,
                   truth=monte_carlo_truth(setting4, n_bars=(50,)),
                   n_bars=(50,), with_comparators=False)
    assert s4.orientation_counts.get("d0_above", 0) == 6
    # the equal-support setting stays in the empty-control-only branch
    setting1 = make_setting(1, t=0.8522)
    s1 = run_study(setting1, reps=3, n=600, config=cfg,
                   truth=monte_carlo_truth(setting1, n_bars=(50,)),
                   n_bars=(50,), with_comparators=False)
    assert s1.orientation_counts.get("d0_empty", 0) >= 4


def test_run_study_rejects_zero_reps():
    with pytest.raises(InvalidParameters):
        run_study(make_setting(1, t=1.0), reps=0, n=600,
                  config=AnalysisConfig())
