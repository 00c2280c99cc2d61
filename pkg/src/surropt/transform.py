"""Support partition and the optimal surrogate transformation.

The transformation g maps the surrogate onto the outcome scale so that the
between-arm difference in g(S) tracks the between-arm difference in Y.  On
the treated-arm support it is the treated conditional mean plus a multiple
of the control/treated density ratio; on the control-only region it is the
control conditional mean plus a constant offset.  The multiplier and offset
are pinned jointly by an unbiasedness constraint on the control arm and by
continuity at the junction between the overlap region and the control-only
region.

A brute-force check is provided: the same problem is discretised on the
grid and solved as a finite-dimensional Lagrange system with a generic
sparse linear solver, independent of the closed-form algebra.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import spsolve

from .data import AnalysisConfig, TrialDataset
from .errors import (
    DegenerateK2,
    InvalidParameters,
    NoOverlap,
    OutOfSupport,
    SingularSystem,
    TwoSidedD0,
)
from .kernel import KernelConfig, bandwidth, kernel_weights


class Interval(NamedTuple):
    lo: float
    hi: float

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.lo) & (x <= self.hi)


@dataclass(frozen=True)
class SupportPartition:
    """Estimated per-arm surrogate supports and the derived regions.

    d_c is the overlap of the two supports, d_0 the control-only piece,
    d_1 the treated-only piece(s); s_star is the junction point where d_c
    meets d_0.  orientation records on which side of the overlap the
    control-only region sits.
    """

    omega0: Interval
    omega1: Interval
    d_c: Interval
    d_0: Interval | None
    d_1: tuple[Interval, ...]
    s_star: float | None
    orientation: str  # d0_above | d0_below | d0_empty

    @property
    def span(self) -> Interval:
        return Interval(min(self.omega0.lo, self.omega1.lo),
                        max(self.omega0.hi, self.omega1.hi))

    def to_dict(self) -> dict:
        return {
            "omega0": list(self.omega0),
            "omega1": list(self.omega1),
            "d_c": list(self.d_c),
            "d_0": list(self.d_0) if self.d_0 is not None else None,
            "d_1": [list(piece) for piece in self.d_1],
            "s_star": self.s_star,
            "orientation": self.orientation,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SupportPartition":
        return cls(
            omega0=Interval(*payload["omega0"]),
            omega1=Interval(*payload["omega1"]),
            d_c=Interval(*payload["d_c"]),
            d_0=Interval(*payload["d_0"]) if payload["d_0"] is not None else None,
            d_1=tuple(Interval(*piece) for piece in payload["d_1"]),
            s_star=payload["s_star"],
            orientation=payload["orientation"],
        )


def partition_from_bounds(l0: float, u0: float, l1: float, u1: float) -> SupportPartition:
    """Derive the region partition from the four support endpoints."""
    if not (l0 < u0 and l1 < u1):
        raise InvalidParameters("supports must have positive length")
    lo_c, hi_c = max(l0, l1), min(u0, u1)
    if lo_c >= hi_c:
        raise NoOverlap(f"arm supports [{l0}, {u0}] and [{l1}, {u1}] do not overlap")
    if l0 < l1 and u0 > u1:
        raise TwoSidedD0(
            "control-arm support extends beyond the treated-arm support on "
            "both sides; no single junction point exists"
        )
    d_c = Interval(lo_c, hi_c)
    if u0 > u1:
        d_0, s_star, orientation = Interval(u1, u0), u1, "d0_above"
    elif l0 < l1:
        d_0, s_star, orientation = Interval(l0, l1), l1, "d0_below"
    else:
        d_0, s_star, orientation = None, None, "d0_empty"
    d_1 = []
    if l1 < l0:
        d_1.append(Interval(l1, l0))
    if u0 < u1:
        d_1.append(Interval(u0, u1))
    return SupportPartition(
        omega0=Interval(l0, u0),
        omega1=Interval(l1, u1),
        d_c=d_c,
        d_0=d_0,
        d_1=tuple(d_1),
        s_star=s_star,
        orientation=orientation,
    )


def estimate_partition(dataset: TrialDataset, trim: float = 0.0) -> SupportPartition:
    """Per-arm supports from (trimmed) sample quantiles, then the regions."""
    if not 0.0 <= trim < 0.5:
        raise InvalidParameters("trim must be in [0, 0.5)")
    s0 = dataset.s[dataset.arm_mask(0)]
    s1 = dataset.s[dataset.arm_mask(1)]
    l0, u0 = np.quantile(s0, [trim, 1.0 - trim])
    l1, u1 = np.quantile(s1, [trim, 1.0 - trim])
    return partition_from_bounds(float(l0), float(u0), float(l1), float(u1))


# --- evaluation grid -------------------------------------------------------------


def build_grid(partition: SupportPartition, grid_points: int) -> np.ndarray:
    """Increasing grid over the union support with every region boundary on-grid.

    Points are allocated to the segments between boundaries proportionally
    to segment length, so the grid is piecewise uniform.
    """
    if grid_points < 16:
        raise InvalidParameters("grid_points must be at least 16")
    span = partition.span
    breaks = sorted({span.lo, span.hi, partition.omega0.lo, partition.omega0.hi,
                     partition.omega1.lo, partition.omega1.hi})
    total = span.length
    pieces = []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        n_seg = max(3, int(round(grid_points * (hi - lo) / total)))
        pieces.append(np.linspace(lo, hi, n_seg))
    grid = np.unique(np.concatenate(pieces))
    return grid


def _index_of(grid: np.ndarray, x: float) -> int:
    i = int(np.argmin(np.abs(grid - x)))
    if not np.isclose(grid[i], x, rtol=0.0, atol=1e-9 * max(1.0, abs(x))):
        raise InvalidParameters(f"grid does not contain boundary point {x}")
    return i


class RegionIndex(NamedTuple):
    """Inclusive index ranges of each region on a grid (boundaries shared)."""

    dc: tuple[int, int]
    d0: tuple[int, int] | None
    d1: tuple[tuple[int, int], ...]
    omega0: tuple[int, int]
    omega1: tuple[int, int]
    s_star: int | None


def locate_regions(grid: np.ndarray, partition: SupportPartition) -> RegionIndex:
    def rng(iv: Interval) -> tuple[int, int]:
        return (_index_of(grid, iv.lo), _index_of(grid, iv.hi))

    return RegionIndex(
        dc=rng(partition.d_c),
        d0=rng(partition.d_0) if partition.d_0 is not None else None,
        d1=tuple(rng(piece) for piece in partition.d_1),
        omega0=rng(partition.omega0),
        omega1=rng(partition.omega1),
        s_star=(_index_of(grid, partition.s_star)
                if partition.s_star is not None else None),
    )


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.empty_like(x)
    w[0] = 0.5 * (x[1] - x[0])
    w[-1] = 0.5 * (x[-1] - x[-2])
    w[1:-1] = 0.5 * (x[2:] - x[:-2])
    return w


def _integrate(values: np.ndarray, grid: np.ndarray, rng: tuple[int, int]):
    i0, i1 = rng
    return np.trapezoid(values[i0:i1 + 1], x=grid[i0:i1 + 1], axis=0)


# --- curve estimation ------------------------------------------------------------


@dataclass(frozen=True)
class CurveSet:
    """Gridded density and conditional-mean curves for both arms.

    m0/m1 carry NaN outside their own arm's support; delta01 = m0 - m1 is
    defined on the overlap only.  r is the floored density ratio f0/f1.
    """

    grid: np.ndarray
    m0: np.ndarray
    m1: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    r: np.ndarray
    delta01: np.ndarray
    regions: RegionIndex
    floor: float
    floor_bound_frac: float
    n_excluded: int


def _raw_curves(s_by_arm, y_by_arm, grid, h, v_by_arm):
    """Weighted kernel curves on the grid; every array is (grid, B)."""
    out = {}
    for arm in (0, 1):
        w = kernel_weights(s_by_arm[arm], grid, h)  # (G, n_a)
        v = v_by_arm[arm]  # (n_a, B)
        num_f = w @ v
        out[f"f{arm}"] = num_f / v.sum(axis=0)
        num_m = w @ (v * y_by_arm[arm][:, None])
        # a fully underflowed neighbourhood is undefined; tiny positive mass
        # degrades to a nearest-point average whose density weight is tiny too
        denom = np.where(num_f > 0.0, num_f, np.nan)
        out[f"m{arm}"] = num_m / denom
    return out


def _masked_curves(raw, grid, regions, floor_frac):
    """Apply support masks, the ratio floor, and the overlap difference."""
    g = grid.size
    in0 = np.zeros(g, dtype=bool)
    in0[regions.omega0[0]:regions.omega0[1] + 1] = True
    in1 = np.zeros(g, dtype=bool)
    in1[regions.omega1[0]:regions.omega1[1] + 1] = True
    inc = np.zeros(g, dtype=bool)
    inc[regions.dc[0]:regions.dc[1] + 1] = True

    f0, f1 = raw["f0"], raw["f1"]
    m0 = np.where(in0[:, None] if f0.ndim == 2 else in0, raw["m0"], np.nan)
    m1 = np.where(in1[:, None] if f1.ndim == 2 else in1, raw["m1"], np.nan)
    floor = floor_frac * np.nanmax(f1, axis=0)
    r = f0 / np.maximum(f1, floor)
    delta01 = np.where(inc[:, None] if f0.ndim == 2 else inc, m0 - m1, np.nan)
    floor_bound = np.mean(f1 < floor, axis=0)
    return m0, m1, f0, f1, r, delta01, floor, floor_bound


def estimate_curves(
    dataset: TrialDataset,
    partition: SupportPartition,
    cfg: KernelConfig,
    grid_points: int = 512,
    floor_frac: float = 1e-4,
    weights: np.ndarray | None = None,
) -> CurveSet:
    """Kernel density and conditional-mean curves on the partition grid."""
    grid = build_grid(partition, grid_points)
    regions = locate_regions(grid, partition)
    a = dataset.a
    v = np.ones(dataset.n) if weights is None else np.asarray(weights, dtype=float)
    if v.shape != (dataset.n,):
        raise InvalidParameters("weights must be one value per subject")
    s_by = {arm: dataset.s[a == arm] for arm in (0, 1)}
    y_by = {arm: dataset.y[a == arm] for arm in (0, 1)}
    v_by = {arm: v[a == arm][:, None] for arm in (0, 1)}
    raw = {k: arr[:, 0] for k, arr in _raw_curves(s_by, y_by, grid, cfg.h, v_by).items()}
    m0, m1, f0, f1, r, delta01, floor, floor_bound = _masked_curves(
        raw, grid, regions, floor_frac
    )
    in0 = slice(regions.omega0[0], regions.omega0[1] + 1)
    in1 = slice(regions.omega1[0], regions.omega1[1] + 1)
    n_excluded = int(np.isnan(m0[in0]).sum() + np.isnan(m1[in1]).sum())
    return CurveSet(
        grid=grid, m0=m0, m1=m1, f0=f0, f1=f1, r=r, delta01=delta01,
        regions=regions, floor=float(floor), floor_bound_frac=float(floor_bound),
        n_excluded=n_excluded,
    )


def curves_from_functions(
    m0_fn: Callable,
    m1_fn: Callable,
    f0_fn: Callable,
    f1_fn: Callable,
    partition: SupportPartition,
    grid_points: int = 512,
    floor_frac: float = 1e-4,
) -> CurveSet:
    """CurveSet built from analytic curves instead of data (truth pipelines)."""
    grid = build_grid(partition, grid_points)
    regions = locate_regions(grid, partition)
    raw = {
        "m0": np.asarray(m0_fn(grid), dtype=float),
        "m1": np.asarray(m1_fn(grid), dtype=float),
        "f0": np.asarray(f0_fn(grid), dtype=float),
        "f1": np.asarray(f1_fn(grid), dtype=float),
    }
    m0, m1, f0, f1, r, delta01, floor, floor_bound = _masked_curves(
        raw, grid, regions, floor_frac
    )
    return CurveSet(
        grid=grid, m0=m0, m1=m1, f0=f0, f1=f1, r=r, delta01=delta01,
        regions=regions, floor=float(floor), floor_bound_frac=float(floor_bound),
        n_excluded=0,
    )


# --- multiplier and offset --------------------------------------------------------


class LambdaC(NamedTuple):
    lam: float
    c: float | None
    k1: float
    k2: float


def _solve_lambda_arrays(grid, f0, r, delta01, regions, strict=True):
    """Core solve; accepts (G,) or (G, B) curve arrays."""
    k2 = _integrate(r * f0, grid, regions.dc)
    if strict and np.any(~np.isfinite(np.asarray(k2)) | (np.asarray(k2) <= 0)):
        raise DegenerateK2(f"integrated density ratio over the overlap is {k2}")
    ic = _integrate(delta01 * f0, grid, regions.dc)
    if regions.d0 is not None:
        k1 = _integrate(f0, grid, regions.d0)
        r_star = r[regions.s_star]
        d_star = delta01[regions.s_star]
        denom = k2 + k1 * r_star
        lam = (ic + k1 * d_star) / denom
        c = (r_star * ic - k2 * d_star) / denom
    else:
        k1 = np.zeros_like(k2)
        lam = ic / k2
        c = None
    if strict and not np.all(np.isfinite(np.asarray(lam))):
        raise DegenerateK2("overlap curves contain undefined values; cannot solve")
    return lam, c, k1, k2


def solve_lambda_c(curves: CurveSet, partition: SupportPartition) -> LambdaC:
    """Ratio multiplier, control-region offset and the two mass integrals."""
    lam, c, k1, k2 = _solve_lambda_arrays(
        curves.grid, curves.f0, curves.r, curves.delta01, curves.regions
    )
    return LambdaC(
        lam=float(lam),
        c=None if c is None else float(c),
        k1=float(k1),
        k2=float(k2),
    )


def _g_on_grid(curves_m0, curves_m1, r, regions, lam, c):
    """Piecewise transform values on the grid; handles (G,) and (G, B)."""
    g = np.asarray(curves_m1 + lam * r)
    if regions.d0 is not None:
        i0, i1 = regions.d0
        branch0 = curves_m0 + c
        if regions.s_star == i0:
            lo, hi = i0 + 1, i1 + 1
        else:
            lo, hi = i0, i1
        g[lo:hi] = np.asarray(branch0)[lo:hi]
    return g


@dataclass(frozen=True)
class TransformEstimate:
    """Fitted transformation with its diagnostics.

    ``lam`` multiplies the density ratio on the treated-arm support, ``c``
    shifts the control conditional mean on the control-only region, ``k1``
    is the control-density mass of that region and ``k2`` the integrated
    density ratio over the overlap.  ``continuity_gap`` is the difference
    between the two branch values at the junction (identically zero up to
    rounding).
    """

    partition: SupportPartition
    curves: CurveSet
    lam: float
    c: float | None
    k1: float
    k2: float
    g_values: np.ndarray
    h: float
    continuity_gap: float

    @property
    def grid(self) -> np.ndarray:
        return self.curves.grid

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "g": self.g_values.tolist(),
            "lambda": self.lam,
            "c": self.c,
            "k1": self.k1,
            "k2": self.k2,
            "partition": self.partition.to_dict(),
            "bandwidth": self.h,
        }


def build_transform(
    curves: CurveSet, partition: SupportPartition, h: float
) -> TransformEstimate:
    """Assemble the transform from solved curves."""
    sol = solve_lambda_c(curves, partition)
    g = _g_on_grid(curves.m0, curves.m1, curves.r, curves.regions, sol.lam, sol.c)
    gap = 0.0
    if curves.regions.s_star is not None:
        i = curves.regions.s_star
        gap = float(
            (curves.m1[i] + sol.lam * curves.r[i]) - (curves.m0[i] + sol.c)
        )
    return TransformEstimate(
        partition=partition, curves=curves, lam=sol.lam, c=sol.c,
        k1=sol.k1, k2=sol.k2, g_values=g, h=h, continuity_gap=gap,
    )


def fit_transform(
    dataset: TrialDataset,
    config: AnalysisConfig,
    partition: SupportPartition | None = None,
    h: float | None = None,
    weights: np.ndarray | None = None,
) -> TransformEstimate:
    """Full single-sample fit: partition, bandwidth, curves, transform."""
    if partition is None:
        partition = estimate_partition(dataset, config.support_trim)
    if h is None:
        if config.bandwidth_rule == "fixed":
            h = config.bandwidth
        else:
            h = bandwidth(dataset.s, config.undersmooth_exponent)
    cfg = KernelConfig(h=h, rule=config.bandwidth_rule)
    curves = estimate_curves(
        dataset, partition, cfg,
        grid_points=config.grid_points,
        floor_frac=config.density_floor,
        weights=weights,
    )
    return build_transform(curves, partition, h)


def evaluate_g(estimate: TransformEstimate, s):
    """Transform value(s) by linear interpolation; outside support raises."""
    pts = np.atleast_1d(np.asarray(s, dtype=float))
    grid = estimate.grid
    outside = (pts < grid[0]) | (pts > grid[-1])
    if outside.any():
        bad = pts[outside]
        raise OutOfSupport(float(bad[0]) if bad.size == 1 else bad)
    out = np.interp(pts, grid, estimate.g_values)
    return float(out[0]) if np.isscalar(s) else out


def evaluate_g_masked(estimate: TransformEstimate, s):
    """Like evaluate_g but returns (values, in_support_mask); outside -> NaN."""
    pts = np.atleast_1d(np.asarray(s, dtype=float))
    grid = estimate.grid
    inside = (pts >= grid[0]) & (pts <= grid[-1])
    out = np.full(pts.shape, np.nan)
    out[inside] = np.interp(pts[inside], grid, estimate.g_values)
    return out, inside


def constraint_residual(dataset: TrialDataset, estimate: TransformEstimate):
    """Mean of Y - g(S) over arm-0 subjects inside the transform support."""
    mask0 = dataset.arm_mask(0)
    vals, inside = evaluate_g_masked(estimate, dataset.s[mask0])
    resid = float(np.mean(dataset.y[mask0][inside] - vals[inside]))
    return resid, int((~inside).sum())


# --- independent brute-force check -------------------------------------------------


class OracleResult(NamedTuple):
    g: np.ndarray
    lam: float
    c: float | None


def oracle_gopt(
    grid: np.ndarray,
    m0: np.ndarray,
    m1: np.ndarray,
    f0: np.ndarray,
    f1: np.ndarray,
    partition: SupportPartition,
    ratio_floor: float = 1e-12,
) -> OracleResult:
    """Discretised constrained least-squares solve on the grid.

    Minimises the f1-weighted squared distance to the treated conditional
    mean subject to the control-arm unbiasedness constraint, with the
    control-only branch pinned to the control mean plus an offset and the
    two branches tied at the junction.  The resulting finite-dimensional
    Lagrange system is solved by a generic sparse LU factorisation, fully
    independent of the closed-form multiplier/offset algebra.
    """
    grid = np.asarray(grid, dtype=float)
    regions = locate_regions(grid, partition)
    j0, j1 = regions.omega1
    omega1_idx = np.arange(j0, j1 + 1)
    m = omega1_idx.size
    has_d0 = regions.d0 is not None
    i_star = regions.s_star

    f1_o = f1[omega1_idx]
    f0_o = f0[omega1_idx]
    interior = (omega1_idx > j0) & (omega1_idx < j1)
    if i_star is not None:
        interior &= omega1_idx != i_star
    if np.any((f1_o <= 0) & (f0_o > 0) & interior):
        raise SingularSystem(
            "treated-arm density vanishes at interior grid points where the "
            "control density is positive"
        )

    w_dc = np.zeros(grid.size)
    i0, i1 = regions.dc
    w_dc[i0:i1 + 1] = _trapezoid_weights(grid[i0:i1 + 1])
    if has_d0:
        k1 = float(_integrate(f0, grid, regions.d0))

    n_unknown = m + 1 + (1 if has_d0 else 0)  # g values, multiplier, offset
    col_of = {j: k for k, j in enumerate(omega1_idx)}
    col_lam = m
    col_c = m + 1 if has_d0 else None

    rows, cols, vals, rhs = [], [], [], []

    def add(row, col, val):
        rows.append(row)
        cols.append(col)
        vals.append(val)

    row = 0
    for k, j in enumerate(omega1_idx):
        if i_star is not None and j == i_star:
            continue
        if f1[j] > 0:
            # stationarity: f1 g - f0 mult = f1 m1
            add(row, col_of[j], f1[j])
            add(row, col_lam, -f0[j])
            rhs.append(f1[j] * m1[j])
        else:
            # zero-mass point: pin to the treated conditional mean
            add(row, col_of[j], 1.0)
            rhs.append(m1[j])
        row += 1
    if i_star is not None:
        # treated branch at the junction, ratio taken in the vanishing-density limit
        r_star = f0[i_star] / max(f1[i_star], ratio_floor)
        add(row, col_of[i_star], 1.0)
        add(row, col_lam, -r_star)
        rhs.append(m1[i_star])
        row += 1
        # continuity with the control branch
        add(row, col_of[i_star], 1.0)
        add(row, col_c, -1.0)
        rhs.append(m0[i_star])
        row += 1
    # control-arm unbiasedness over the overlap (control-only part cancels
    # except for the offset mass)
    target = 0.0
    for j in range(i0, i1 + 1):
        add(row, col_of[j], w_dc[j] * f0[j])
        target += w_dc[j] * f0[j] * m0[j]
    if has_d0:
        add(row, col_c, k1)
    rhs.append(target)
    row += 1

    if row != n_unknown:
        raise SingularSystem(f"system is {row}x{n_unknown}; cannot solve")
    matrix = csr_matrix((vals, (rows, cols)), shape=(n_unknown, n_unknown))
    try:
        solution = spsolve(matrix, np.asarray(rhs))
    except RuntimeError as err:  # pragma: no cover - SuperLU failure modes
        raise SingularSystem(str(err)) from err
    if not np.all(np.isfinite(solution)):
        raise SingularSystem("linear system produced non-finite values")

    lam = float(solution[col_lam])
    c = float(solution[col_c]) if has_d0 else None
    g = np.full(grid.size, np.nan)
    g[omega1_idx] = solution[:m]
    if has_d0:
        d0_lo, d0_hi = regions.d0
        for j in range(d0_lo, d0_hi + 1):
            if j != i_star:
                g[j] = m0[j] + c
    return OracleResult(g=g, lam=lam, c=c)
