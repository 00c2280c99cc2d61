"""Baseline effect-proportion estimator from nested linear regressions.

The treatment coefficient is compared between a model of the outcome on
treatment alone and a model that also adjusts for the surrogate; the drop
in the coefficient, as a fraction, is the explained proportion.  The fit
is ordinary least squares even for binary outcomes: the estimator serves
as a deliberately simple parametric benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrialDataset
from .errors import NumericError


class SingularDesign(NumericError):
    pass


class NullMarginalEffect(NumericError):
    pass


@dataclass(frozen=True)
class FreedmanFit:
    beta_a_marginal: float
    beta_a_adjusted: float
    pte_f: float

    def to_dict(self) -> dict:
        return {
            "beta_a_marginal": self.beta_a_marginal,
            "beta_a_adjusted": self.beta_a_adjusted,
            "pte_f": self.pte_f,
        }


def _ols_coef(x: np.ndarray, y: np.ndarray, col: int) -> float:
    coef, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < x.shape[1]:
        raise SingularDesign(f"design matrix rank {rank} < {x.shape[1]}")
    return float(coef[col])


def pte_freedman(dataset: TrialDataset, tol: float = 1e-10) -> FreedmanFit:
    """Explained proportion from the change in the treatment coefficient."""
    n = dataset.n
    ones = np.ones(n)
    a = dataset.a.astype(float)
    marginal = _ols_coef(np.column_stack([ones, a]), dataset.y, 1)
    adjusted = _ols_coef(np.column_stack([ones, a, dataset.s]), dataset.y, 1)
    if abs(marginal) < tol:
        raise NullMarginalEffect(
            f"marginal treatment coefficient {marginal!r} too close to zero"
        )
    return FreedmanFit(
        beta_a_marginal=marginal,
        beta_a_adjusted=adjusted,
        pte_f=1.0 - adjusted / marginal,
    )
