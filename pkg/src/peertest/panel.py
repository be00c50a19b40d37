"""Balanced panel containers and the two-way within transformation.

Storage convention
------------------
Observations are stacked period-major: the observation of individual ``i``
in period ``t`` (both 1-based at the API surface) occupies row
``(t - 1) * n + i`` of every stacked vector, i.e. ``y = (y_1', ..., y_T')'``
with ``y_t = (y_{1t}, ..., y_{nt})'``.  Internally rows are 0-based, so a
stacked vector of length ``N = n*T`` reshapes to a ``(T, n)`` array whose
``[t, i]`` entry is observation ``(i+1, t+1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InstanceTooLarge, NonFiniteValue, UnbalancedPanel

#: Largest N for which the dense transformation matrix may be materialized.
DENSE_J_CAP = 10_000


@dataclass
class Panel:
    """A balanced panel: outcome vector, regressor matrix, and dimensions.

    Parameters
    ----------
    y : ndarray of shape (N,)
        Stacked outcomes, ``N = n*T``, period-major (see module docstring).
    X : ndarray of shape (N, L)
        Stacked exogenous regressors, same row order as ``y``.
    n : int
        Number of individuals (at least 2).
    T : int
        Number of periods (at least 2).
    unit_labels, time_labels : tuple, optional
        Identifiers carried through from data ingestion.
    """

    y: np.ndarray
    X: np.ndarray
    n: int
    T: int
    unit_labels: tuple | None = None
    time_labels: tuple | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        self.X = X

    @property
    def N(self) -> int:
        return self.n * self.T

    @property
    def L(self) -> int:
        return self.X.shape[1]


@dataclass
class TransformedPanel:
    """A panel after two-way demeaning, with the effective sample size."""

    y_star: np.ndarray
    X_star: np.ndarray
    n: int
    T: int
    N_star: int = field(init=False)

    def __post_init__(self):
        self.N_star = (self.n - 1) * (self.T - 1)


def stack_index(i: int, t: int, n: int) -> int:
    """Return the 1-based stacked row of individual ``i`` in period ``t``.

    >>> stack_index(2, 3, n=4)
    10
    """
    if not 1 <= i <= n:
        raise DimensionMismatch(f"individual index {i} out of range 1..{n}")
    if t < 1:
        raise DimensionMismatch(f"period index {t} must be >= 1")
    return (t - 1) * n + i


def validate_panel(p: Panel) -> Panel:
    """Check dimensions, balance, and finiteness; return the panel unchanged.

    Raises
    ------
    UnbalancedPanel
        If ``n < 2`` or ``T < 2``.
    DimensionMismatch
        If ``y`` or ``X`` do not have ``n*T`` rows.
    NonFiniteValue
        If any entry of ``y`` or ``X`` is NaN or infinite.
    """
    if p.n < 2 or p.T < 2:
        raise UnbalancedPanel(f"need n >= 2 and T >= 2, got n={p.n}, T={p.T}")
    N = p.n * p.T
    if p.y.shape != (N,):
        raise DimensionMismatch(f"y has length {p.y.shape[0]}, expected n*T = {N}")
    if p.X.ndim != 2 or p.X.shape[0] != N:
        raise DimensionMismatch(f"X has shape {p.X.shape}, expected ({N}, L)")
    if p.X.shape[1] < 1:
        raise DimensionMismatch("X must have at least one column")
    if not np.isfinite(p.y).all():
        raise NonFiniteValue("y contains non-finite values")
    if not np.isfinite(p.X).all():
        raise NonFiniteValue("X contains non-finite values")
    if p.unit_labels is not None and len(p.unit_labels) != p.n:
        raise DimensionMismatch(f"{len(p.unit_labels)} unit labels for n={p.n}")
    if p.time_labels is not None and len(p.time_labels) != p.T:
        raise DimensionMismatch(f"{len(p.time_labels)} time labels for T={p.T}")
    return p


def demean_two_way(values: np.ndarray, n: int, T: int) -> np.ndarray:
    """Double-demean stacked values: v_it - mean_i - mean_t + grand mean.

    Accepts a vector of length ``N`` or a matrix with ``N`` rows (each column
    transformed independently).  Algebraically identical to premultiplying by
    the two-way centering matrix without forming it.
    """
    v = np.asarray(values, dtype=float)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, None]
    if v.shape[0] != n * T:
        raise DimensionMismatch(f"{v.shape[0]} rows, expected n*T = {n * T}")
    M = v.reshape(T, n, -1)
    out = M - M.mean(axis=0) - M.mean(axis=1, keepdims=True) + M.mean(axis=(0, 1))
    out = out.reshape(n * T, -1)
    return out[:, 0] if squeeze else out


def within_transform(p: Panel) -> TransformedPanel:
    """Apply the two-way within transformation to a validated panel.

    Removes individual and period means from ``y`` and every column of ``X``;
    any component of the form ``a_i + b_t`` is annihilated exactly.  The
    effective sample size drops to ``N* = (n-1)(T-1)``.
    """
    validate_panel(p)
    return TransformedPanel(
        y_star=demean_two_way(p.y, p.n, p.T),
        X_star=demean_two_way(p.X, p.n, p.T),
        n=p.n,
        T=p.T,
    )


def build_J(n: int, T: int, cap: int = DENSE_J_CAP) -> np.ndarray:
    """Return the dense N-by-N two-way centering matrix (test oracle only).

    The matrix is the Kronecker product of the period- and individual-level
    centering matrices; it is symmetric, idempotent, and has trace
    ``(n-1)(T-1)``.  Refuses instances with ``n*T > cap`` since the result
    is dense.
    """
    if n < 2 or T < 2:
        raise UnbalancedPanel(f"need n >= 2 and T >= 2, got n={n}, T={T}")
    if n * T > cap:
        raise InstanceTooLarge(f"n*T = {n * T} exceeds the dense cap {cap}")
    J_T = np.eye(T) - np.full((T, T), 1.0 / T)
    J_n = np.eye(n) - np.full((n, n), 1.0 / n)
    return np.kron(J_T, J_n)
