import numpy as np
import pytest

from surropt import AnalysisConfig, TrialDataset


@pytest.fixture
def tiny_dataset():
    """Six subjects, three per arm, the hand-checkable influence example."""
    y = np.array([1.0, 0.0, 1.0, 0.0, 0.0, 1.0])
    a = np.array([1, 1, 1, 0, 0, 0])
    s = np.array([2.0, 1.0, 3.0, 1.5, 0.5, 2.5])
    return TrialDataset(y, s, a)


@pytest.fixture
def fast_config():
    return AnalysisConfig(resample_count=50, grid_points=128, seed=20240101,
                          min_fold_arm=10)


def make_balanced(n, rng, y_fn=None):
    """Continuous-outcome dataset with both arms guaranteed nonempty."""
    a = np.tile([0, 1], n // 2)
    s = rng.normal(a * 0.5, 1.0)
    y = y_fn(s, a) if y_fn else s + rng.normal(0, 0.5, size=a.size)
    return TrialDataset(y, s, a)
