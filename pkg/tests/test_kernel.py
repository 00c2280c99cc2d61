import math

import numpy as np
import pytest

from surropt import KernelConfig, bandwidth, density_ratio, kde, nw_regress
from surropt.errors import DegenerateSample, EmptyNeighborhood

PHI0 = 1.0 / math.sqrt(2.0 * math.pi)          # standard normal density at 0
PHI1 = math.exp(-0.5) / math.sqrt(2.0 * math.pi)
PHI2 = math.exp(-2.0) / math.sqrt(2.0 * math.pi)


def standardized_wide_sample(n=2000):
    # linear ramp: after standardizing, sd (ddof=1) is exactly 1 and
    # IQR/1.34 = sqrt(3)/1.34 > 1, so the sd term is the binding scale
    x = np.linspace(-1.0, 1.0, n)
    return x / np.std(x, ddof=1)


def test_bandwidth_rule_value():
    x = standardized_wide_sample()
    h = bandwidth(x, c0=0.06)
    assert h == pytest.approx(1.06 * 2000 ** (-0.26), rel=1e-12)
    assert h == pytest.approx(0.1469, abs=5e-5)


def test_bandwidth_zero_exponent_is_plugin():
    x = standardized_wide_sample()
    assert bandwidth(x, c0=0.0) == pytest.approx(1.06 * 2000 ** (-0.2), rel=1e-12)


def test_bandwidth_degenerate():
    with pytest.raises(DegenerateSample):
        bandwidth(np.full(10, 3.3))


def test_bandwidth_scale_equivariant():
    rng = np.random.default_rng(3)
    x = rng.gamma(2.0, 1.5, size=400)
    for k in (0.1, 2.0, 37.5):
        assert bandwidth(k * x) == pytest.approx(k * bandwidth(x), rel=1e-12)


def test_kde_point_values():
    cfg = KernelConfig(h=1.0)
    assert kde([0.0], 0.0, cfg) == pytest.approx(PHI0, abs=1e-10)
    assert kde([-1.0, 1.0], 0.0, cfg) == pytest.approx(PHI1, abs=1e-10)


def test_kde_scaling_identity():
    rng = np.random.default_rng(11)
    x = rng.normal(size=200)
    for k in (0.5, 3.0):
        base = kde(x, 0.4, KernelConfig(h=0.3))
        scaled = kde(k * x, k * 0.4, KernelConfig(h=k * 0.3))
        assert scaled == pytest.approx(base / k, rel=1e-10)


def test_kde_integrates_to_one():
    rng = np.random.default_rng(5)
    x = rng.gamma(3.0, 1.0, size=500)
    h = bandwidth(x)
    grid = np.linspace(x.min() - 5 * h, x.max() + 5 * h, 4001)
    dens = kde(x, grid, KernelConfig(h=h))
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-3)


def test_nw_symmetric_average():
    cfg = KernelConfig(h=1.0)
    assert nw_regress([-1.0, 1.0], [0.0, 2.0], 0.0, cfg) == pytest.approx(1.0)


def test_nw_single_point():
    cfg = KernelConfig(h=1.0)
    assert nw_regress([5.0], [3.0], 5.5, cfg) == pytest.approx(3.0)


def test_nw_weighted_value():
    cfg = KernelConfig(h=1.0)
    expected = (PHI0 * 0.0 + PHI2 * 1.0) / (PHI0 + PHI2)
    got = nw_regress([0.0, 2.0], [0.0, 1.0], 0.0, cfg)
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(0.1192, abs=5e-5)


def test_nw_permutation_invariant():
    rng = np.random.default_rng(9)
    s = rng.normal(size=50)
    y = rng.normal(size=50)
    cfg = KernelConfig(h=0.5)
    base = nw_regress(s, y, 0.2, cfg)
    perm = rng.permutation(50)
    assert nw_regress(s[perm], y[perm], 0.2, cfg) == pytest.approx(base, rel=1e-12)


def test_nw_range_bounds():
    rng = np.random.default_rng(13)
    s = rng.normal(size=100)
    y = rng.uniform(2.0, 3.0, size=100)
    cfg = KernelConfig(h=0.4)
    vals = nw_regress(s, y, np.linspace(s.min(), s.max(), 25), cfg)
    assert np.all(vals >= y.min() - 1e-12)
    assert np.all(vals <= y.max() + 1e-12)


def test_nw_empty_neighborhood():
    cfg = KernelConfig(h=0.1)
    with pytest.raises(EmptyNeighborhood):
        nw_regress([0.0, 1.0], [1.0, 2.0], 5.0, cfg)


def test_density_ratio():
    assert density_ratio(0.2, 0.4, 1e-6) == pytest.approx(0.5)
    assert density_ratio(0.2, 0.0, 1e-3) == pytest.approx(200.0)
    assert density_ratio(0.0, 0.4, 1e-6) == 0.0
