"""Projection computations on the instrument span, without the N-by-N projector.

Everything is expressed through an orthonormal basis ``Q`` of the span: the
projector is ``P = Q Q'``, its diagonal (the leverage values) is the vector of
squared row norms of ``Q``, and the quadratic forms and the trace functional
needed by the tests reduce to small dense operations in O(N K) or O(N K^2).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, RankCollapse, ValidationError
from .instruments import InstrumentMatrix

#: Leverage above this triggers a diagnostic (the tests assume p_ii bounded away from 1).
LEVERAGE_WARNING_THRESHOLD = 0.999

#: Relative diagonal threshold for declaring a rank collapse inside the QR.
QR_GUARD_TOL = 1e-12


@dataclass
class ProjectionBundle:
    """Orthonormal basis of the instrument span plus its leverage values."""

    q_orth: np.ndarray
    leverage: np.ndarray = field(init=False)
    K: int = field(init=False)

    def __post_init__(self):
        self.q_orth = np.asarray(self.q_orth, dtype=float)
        self.leverage = np.einsum("ij,ij->i", self.q_orth, self.q_orth)
        self.K = self.q_orth.shape[1]

    @property
    def N(self) -> int:
        return self.q_orth.shape[0]

    def max_leverage(self) -> float:
        return float(self.leverage.max())

    def leverage_warning(self) -> bool:
        """True (and warns once) if some leverage is numerically close to 1."""
        if self.max_leverage() > LEVERAGE_WARNING_THRESHOLD:
            warnings.warn(
                f"maximum leverage {self.max_leverage():.6f} exceeds "
                f"{LEVERAGE_WARNING_THRESHOLD}; the normal approximation assumes "
                "leverage bounded away from 1",
                RuntimeWarning,
                stacklevel=2,
            )
            return True
        return False


def orthonormalize(Q, tol: float = QR_GUARD_TOL) -> ProjectionBundle:
    """Householder QR of a full-column-rank matrix, returned as a bundle.

    Raises
    ------
    RankCollapse
        If a diagonal entry of R falls below ``tol`` times the corresponding
        column norm, i.e. the input was not actually full rank.
    """
    Qm = Q.Q if isinstance(Q, InstrumentMatrix) else np.asarray(Q, dtype=float)
    if Qm.ndim == 1:
        Qm = Qm[:, None]
    if Qm.shape[1] == 0:
        raise DimensionMismatch("cannot orthonormalize an empty matrix")
    q, r = linalg.qr(Qm, mode="economic")
    col_norms = np.linalg.norm(Qm, axis=0)
    bad = np.abs(np.diag(r)) <= tol * np.maximum(col_norms, np.finfo(float).tiny)
    if bad.any():
        raise RankCollapse(
            f"column {int(np.flatnonzero(bad)[0]) + 1} lost rank during factorization"
        )
    return ProjectionBundle(q_orth=q)


def quad_form_P(bundle: ProjectionBundle, u: np.ndarray) -> float:
    """u' P u, i.e. the squared norm of the projection of ``u`` onto the span."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != bundle.N:
        raise DimensionMismatch(f"vector length {u.shape[0]}, bundle has N = {bundle.N}")
    w = bundle.q_orth.T @ u
    return float(w @ w)


def quad_form_P_minus_D(bundle: ProjectionBundle, u: np.ndarray) -> float:
    """u' (P - D) u where D holds the diagonal of P (jackknife centering)."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != bundle.N:
        raise DimensionMismatch(f"vector length {u.shape[0]}, bundle has N = {bundle.N}")
    return quad_form_P(bundle, u) - float(bundle.leverage @ (u * u))


def trace_phi(bundle: ProjectionBundle, omega: np.ndarray) -> float:
    """(2/K) tr[(P-D) W (P-D) W] for W = diag(omega), omega >= 0.

    Uses the identity tr[(P-D)W(P-D)W] = ||Q' W Q||_F^2 - sum_i p_ii^2 w_i^2,
    so the cost is O(N K^2) time and O(K^2) memory.
    """
    omega = np.asarray(omega, dtype=float).reshape(-1)
    if omega.shape[0] != bundle.N:
        raise DimensionMismatch(f"omega length {omega.shape[0]}, bundle has N = {bundle.N}")
    if (omega < 0).any():
        raise ValidationError("omega must be nonnegative (squared residuals)")
    M = bundle.q_orth.T @ (omega[:, None] * bundle.q_orth)
    term = float((M * M).sum()) - float((bundle.leverage**2) @ (omega**2))
    return 2.0 / bundle.K * term


def kron_bundle(left: np.ndarray, right: np.ndarray,
                extra: np.ndarray | None = None) -> ProjectionBundle:
    """Bundle whose basis is kron(left, right), optionally with extra columns.

    ``left`` and ``right`` must each have orthonormal columns, and ``extra``
    (if given) must be orthonormal and orthogonal to the Kronecker block; the
    caller is responsible for these properties.
    """
    q = np.kron(left, right)
    if extra is not None and extra.size:
        q = np.hstack([q, extra])
    return ProjectionBundle(q_orth=q)
