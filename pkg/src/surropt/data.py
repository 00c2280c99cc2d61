"""Trial data containers, CSV loading and global analysis configuration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
import pandas as pd

from .errors import (
    ArmTooSmall,
    InvalidParameters,
    MissingColumn,
    NonBinaryArm,
    NonFiniteValue,
)


@dataclass(frozen=True)
class TrialRecord:
    """One subject: primary outcome, surrogate value, treatment arm."""

    y: float
    s: float
    a: int


@dataclass(frozen=True)
class TrialDataset:
    """Validated two-arm trial data.

    Arrays are aligned by subject position; influence values computed
    downstream are indexed the same way, so order is never shuffled.
    """

    y: np.ndarray
    s: np.ndarray
    a: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        s = np.array(self.s, dtype=float)
        a = np.asarray(self.a)
        if not (y.shape == s.shape == a.shape) or y.ndim != 1:
            raise InvalidParameters("y, s, a must be equal-length 1-d arrays")
        bad = ~np.isfinite(y)
        if bad.any():
            raise NonFiniteValue(int(np.argmax(bad)), "y")
        bad = ~np.isfinite(s)
        if bad.any():
            raise NonFiniteValue(int(np.argmax(bad)), "s")
        af = np.asarray(a, dtype=float)
        nonbinary = ~np.isin(af, (0.0, 1.0)) | ~np.isfinite(af)
        if nonbinary.any():
            i = int(np.argmax(nonbinary))
            raise NonBinaryArm(i, a[i])
        a = af.astype(np.int8)
        for arm in (0, 1):
            count = int(np.sum(a == arm))
            if count < 2:
                raise ArmTooSmall(arm, count)
        y.flags.writeable = False
        s.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def n0(self) -> int:
        return int(np.sum(self.a == 0))

    @property
    def n1(self) -> int:
        return int(np.sum(self.a == 1))

    def records(self) -> Iterator[TrialRecord]:
        for y, s, a in zip(self.y, self.s, self.a):
            yield TrialRecord(float(y), float(s), int(a))

    def arm_mask(self, arm: int) -> np.ndarray:
        return self.a == arm

    def subset(self, index: np.ndarray) -> "TrialDataset":
        """Dataset restricted to the given positions (order preserved)."""
        return TrialDataset(self.y[index], self.s[index], self.a[index])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"y": self.y, "s": self.s, "a": self.a})

    def to_csv(self, path_or_buf) -> None:
        self.to_frame().to_csv(path_or_buf, index=False, float_format="%.17g")


def load_dataset(
    source,
    col_y: str = "y",
    col_s: str = "s",
    col_a: str = "a",
    strict: bool = True,
) -> TrialDataset:
    """Read a delimited text stream or path into a TrialDataset.

    Missing values (empty field or "NA") raise NonFiniteValue in strict mode
    and are dropped with a count in lenient mode.  Arm values must be exactly
    0 or 1.
    """
    try:
        frame = pd.read_csv(source, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise MissingColumn(f"<unparseable input: {err}>") from err
    for name in (col_y, col_s, col_a):
        if name not in frame.columns:
            raise MissingColumn(name)
    cols = frame[[col_y, col_s, col_a]].apply(pd.to_numeric, errors="coerce")
    values = cols.to_numpy(dtype=float)
    missing = ~np.isfinite(values)
    if missing.any():
        if strict:
            row = int(np.argmax(missing.any(axis=1)))
            fld = (col_y, col_s, col_a)[int(np.argmax(missing[row]))]
            raise NonFiniteValue(row, fld)
        keep = ~missing.any(axis=1)
        values = values[keep]
        n_dropped = int((~keep).sum())
    else:
        n_dropped = 0
    arm = values[:, 2]
    nonbinary = ~np.isin(arm, (0.0, 1.0))
    if nonbinary.any():
        i = int(np.argmax(nonbinary))
        raise NonBinaryArm(i, arm[i])
    return TrialDataset(values[:, 0], values[:, 1], arm, n_dropped=n_dropped)


def arm_values(dataset: TrialDataset, arm: int, fieldname: str) -> np.ndarray:
    """Values of ``y`` or ``s`` restricted to one arm, order preserved."""
    if arm not in (0, 1):
        raise InvalidParameters(f"arm must be 0 or 1, got {arm!r}")
    if fieldname not in ("y", "s"):
        raise InvalidParameters(f"field must be 'y' or 's', got {fieldname!r}")
    values = dataset.y if fieldname == "y" else dataset.s
    return values[dataset.arm_mask(arm)]


@dataclass
class AnalysisConfig:
    """Knobs shared across the estimation pipeline.

    ``undersmooth_exponent`` shrinks the plug-in bandwidth by n**(-c0);
    values around 0.06 keep the smoother inside the undersmoothing range the
    resampling inference needs.  ``density_floor`` is a fraction of the peak
    treated-arm density used to floor the density ratio.
    """

    bandwidth_rule: str = "scott_undersmoothed"
    bandwidth: float | None = None  # used when rule == "fixed"
    undersmooth_exponent: float = 0.06
    grid_points: int = 512
    support_trim: float = 0.0
    density_floor: float = 1e-4
    resample_count: int = 500
    cv_folds: int = 2
    critical_z: float = 1.96
    alpha: float = 0.05
    seed: int = 20240817
    min_fold_arm: int = 50
    exclusion_cap: float = 0.02
    null_effect_threshold: float = 1.0
    max_design_n: int = 10**6

    def __post_init__(self):
        if not 0.0 <= self.support_trim < 0.5:
            raise InvalidParameters("support_trim must be in [0, 0.5)")
        if self.grid_points < 16:
            raise InvalidParameters("grid_points must be at least 16")
        if self.cv_folds < 2:
            raise InvalidParameters("cv_folds must be at least 2")
        if self.resample_count < 2:
            raise InvalidParameters("resample_count must be at least 2")
        if self.bandwidth_rule not in ("scott_undersmoothed", "fixed"):
            raise InvalidParameters(f"unknown bandwidth rule {self.bandwidth_rule!r}")
        if self.bandwidth_rule == "fixed" and not (self.bandwidth or 0) > 0:
            raise InvalidParameters("fixed bandwidth rule needs bandwidth > 0")
