"""Excess kurtosis of the idiosyncratic error from two-way-transformed residuals.

The double demeaning mixes errors across observations, so raw fourth moments
of the transformed residuals are biased for the error's fourth moment.  The
estimator here undoes the mixing through two constants that depend only on
the panel dimensions: the sum of squared diagonal entries and the sum of
fourth powers of all entries of the centering matrix, both available in
closed form for a balanced panel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, UnbalancedPanel


@dataclass(frozen=True)
class KurtosisEstimate:
    """Excess-kurtosis estimate with its ingredients."""

    kappa_hat: float
    mu4_hat: float
    sigma2_hat: float
    pi1: float
    pi2: float


def pi_constants(n: int, T: int) -> tuple[float, float]:
    """Closed forms for the two centering-matrix constants of a balanced panel.

    With ``N = n*T`` and ``N* = (n-1)(T-1)``:

    * ``pi1``: sum of squared diagonal entries, ``N*^2 / N``;
    * ``pi2``: sum of fourth powers of all entries,
      ``N* (N*^3 + (n-1)^3 + (T-1)^3 + 1) / N^3``.
    """
    if n < 2 or T < 2:
        raise UnbalancedPanel(f"need n >= 2 and T >= 2, got n={n}, T={T}")
    N = n * T
    N_star = (n - 1) * (T - 1)
    pi1 = N_star**2 / N
    pi2 = N_star * (N_star**3 + (n - 1) ** 3 + (T - 1) ** 3 + 1) / N**3
    return pi1, pi2


def excess_kurtosis(residuals_star: np.ndarray, n: int, T: int) -> KurtosisEstimate:
    """Estimate the error's excess kurtosis from transformed regression residuals.

    ``residuals_star`` must be the residuals of the two-way within regression
    (length ``n*T``); they are used as-is, with no further residualization.
    Returns ``kappa_hat = mu4_hat - 3 sigma2_hat^2 (pi1/pi2)`` where
    ``mu4_hat = sum(r^4) / pi2`` and ``sigma2_hat = sum(r^2) / N*``.
    """
    r = np.asarray(residuals_star, dtype=float).reshape(-1)
    if r.shape[0] != n * T:
        raise DimensionMismatch(f"residual length {r.shape[0]}, expected n*T = {n * T}")
    pi1, pi2 = pi_constants(n, T)
    N_star = (n - 1) * (T - 1)
    mu4_hat = float((r**4).sum() / pi2)
    sigma2_hat = float((r**2).sum() / N_star)
    kappa_hat = mu4_hat - 3.0 * sigma2_hat**2 * (pi1 / pi2)
    return KurtosisEstimate(
        kappa_hat=kappa_hat, mu4_hat=mu4_hat, sigma2_hat=sigma2_hat, pi1=pi1, pi2=pi2
    )
