"""Kernel smoothing primitives: density estimation, local-mean regression,
bandwidth selection and the floored density ratio.

All estimators use a Gaussian kernel.  The bandwidth rule is the robust
plug-in 1.06 * min(sd, IQR/1.34) * n**(-1/5), shrunk by a further
n**(-c0) undersmoothing factor so that downstream ratio and resampling
inference stays first-order valid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSample, EmptyNeighborhood, InvalidParameters

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class KernelConfig:
    h: float
    kernel: str = "gaussian"
    rule: str = "scott_undersmoothed"

    def __post_init__(self):
        if self.kernel != "gaussian":
            raise InvalidParameters(f"unsupported kernel {self.kernel!r}")
        if not self.h > 0:
            raise InvalidParameters("bandwidth must be positive")


def bandwidth(values, c0: float = 0.06) -> float:
    """Undersmoothed plug-in bandwidth.

    Returns 1.06 * min(sd, IQR/1.34) * n**(-1/5 - c0).  The sd is the
    sample standard deviation (ddof=1); if the IQR is zero the sd alone is
    used.  A sample with no spread at all raises DegenerateSample.
    """
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise DegenerateSample("need at least 2 values for a bandwidth")
    sd = float(np.std(x, ddof=1))
    if sd == 0.0:
        raise DegenerateSample("all values identical; bandwidth undefined")
    q75, q25 = np.percentile(x, [75, 25])
    iqr_scale = (q75 - q25) / 1.34
    scale = min(sd, iqr_scale) if iqr_scale > 0 else sd
    return 1.06 * scale * x.size ** (-0.2 - c0)


def kernel_weights(sample, points, h: float) -> np.ndarray:
    """Gaussian kernel evaluations K_h(S_i - s) as a (points, sample) matrix."""
    s = np.atleast_1d(np.asarray(points, dtype=float))
    x = np.asarray(sample, dtype=float)
    u = (x[None, :] - s[:, None]) / h
    return np.exp(-0.5 * u * u) / (_SQRT_2PI * h)


def kde(sample, s, cfg: KernelConfig):
    """Kernel density estimate of the sample law at point(s) s."""
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise InvalidParameters("empty sample")
    w = kernel_weights(x, s, cfg.h)
    out = w.mean(axis=1)
    return float(out[0]) if np.isscalar(s) else out


def nw_regress(sample_s, sample_y, s, cfg: KernelConfig):
    """Locally-weighted mean of Y at point(s) s.

    Points outside the sample range +- 5h have no effective neighbours and
    raise EmptyNeighborhood rather than extrapolating.
    """
    x = np.asarray(sample_s, dtype=float)
    y = np.asarray(sample_y, dtype=float)
    if x.size != y.size or x.size == 0:
        raise InvalidParameters("sample_s and sample_y must be equal nonzero length")
    pts = np.atleast_1d(np.asarray(s, dtype=float))
    reach = 5.0 * cfg.h
    outside = (pts < x.min() - reach) | (pts > x.max() + reach)
    if outside.any():
        raise EmptyNeighborhood(pts[outside][0] if outside.sum() == 1 else pts[outside])
    w = kernel_weights(x, pts, cfg.h)
    denom = w.sum(axis=1)
    if np.any(denom <= 0.0):
        raise EmptyNeighborhood(pts[denom <= 0.0][0])
    out = (w @ y) / denom
    return float(out[0]) if np.isscalar(s) else out


def density_ratio(f0, f1, floor: float):
    """f0 / max(f1, floor); the floor keeps near-empty denominators finite."""
    if not floor > 0:
        raise InvalidParameters("floor must be positive")
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    out = f0 / np.maximum(f1, floor)
    return float(out) if out.ndim == 0 else out
