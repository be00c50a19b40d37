import numpy as np
import pytest

from peertest import (
    DimensionMismatch,
    ProjectionBundle,
    RankCollapse,
    ValidationError,
    kron_bundle,
    orthonormalize,
    quad_form_P,
    quad_form_P_minus_D,
    trace_phi,
)

rng = np.random.default_rng(2024)


def dense_projector(Q):
    """Oracle: P = Q (Q'Q)^-1 Q' through the normal equations."""
    return Q @ np.linalg.solve(Q.T @ Q, Q.T)


def dense_trace_phi(Q, omega):
    """Oracle: (2/K) tr[(P-D) W (P-D) W] with explicit dense matrices."""
    P = dense_projector(Q)
    D = np.diag(np.diag(P))
    W = np.diag(omega)
    M = (P - D) @ W
    return 2.0 / Q.shape[1] * np.trace(M @ M)


def test_identity_columns_leverage():
    Q = np.eye(4)[:, :2]
    b = orthonormalize(Q)
    np.testing.assert_allclose(b.leverage, [1.0, 1.0, 0.0, 0.0], atol=1e-14)


def test_leverage_sums_to_K():
    for _ in range(5):
        Q = rng.standard_normal((17, 6))
        b = orthonormalize(Q)
        assert b.leverage.sum() == pytest.approx(b.K, abs=1e-10)
        assert np.all(b.leverage >= -1e-12)
        assert np.all(b.leverage <= 1 + 1e-12)


def test_basis_orthonormal():
    Q = rng.standard_normal((30, 8))
    b = orthonormalize(Q)
    np.testing.assert_allclose(b.q_orth.T @ b.q_orth, np.eye(8), atol=1e-10)


def test_projector_matches_normal_equations_oracle():
    Q = rng.standard_normal((12, 5))
    b = orthonormalize(Q)
    np.testing.assert_allclose(b.q_orth @ b.q_orth.T, dense_projector(Q), atol=1e-10)


def test_rank_collapse_detected():
    Q = rng.standard_normal((10, 3))
    Q = np.column_stack([Q, Q[:, 0] + Q[:, 1]])
    with pytest.raises(RankCollapse):
        orthonormalize(Q)


def test_quad_form_P_fixed_points():
    Q = rng.standard_normal((15, 4))
    b = orthonormalize(Q)
    u_in = Q @ rng.standard_normal(4)
    assert quad_form_P(b, u_in) == pytest.approx(u_in @ u_in, rel=1e-10)
    u = rng.standard_normal(15)
    u_perp = u - b.q_orth @ (b.q_orth.T @ u)
    assert quad_form_P(b, u_perp) == pytest.approx(0.0, abs=1e-10 * (u @ u))


def test_quad_forms_match_dense_oracle():
    for _ in range(5):
        N, K = 20, 6
        Q = rng.standard_normal((N, K))
        b = orthonormalize(Q)
        u = rng.standard_normal(N)
        P = dense_projector(Q)
        D = np.diag(np.diag(P))
        assert quad_form_P(b, u) == pytest.approx(u @ P @ u, rel=1e-10)
        assert quad_form_P_minus_D(b, u) == pytest.approx(u @ (P - D) @ u, rel=1e-10)


def test_quad_form_P_minus_D_standard_basis_vanishes():
    Q = rng.standard_normal((9, 3))
    b = orthonormalize(Q)
    for j in range(9):
        e = np.zeros(9)
        e[j] = 1.0
        assert quad_form_P_minus_D(b, e) == pytest.approx(0.0, abs=1e-12)


def test_single_constant_instrument_closed_form():
    N = 16
    b = orthonormalize(np.ones((N, 1)))
    u = rng.standard_normal(N)
    expected = u.sum() ** 2 / N - (u * u).sum() / N
    assert quad_form_P_minus_D(b, u) == pytest.approx(expected, rel=1e-12)
    omega = rng.uniform(0.5, 2.0, N)
    expected_phi = 2.0 * ((omega.sum() / N) ** 2 - (omega**2).sum() / N**2)
    assert trace_phi(b, omega) == pytest.approx(expected_phi, rel=1e-12)


def test_trace_phi_homoskedastic_reduction():
    Q = rng.standard_normal((25, 7))
    b = orthonormalize(Q)
    sigma2 = 1.7
    omega = np.full(25, sigma2)
    expected = 2.0 * sigma2**2 / b.K * (b.K - (b.leverage**2).sum())
    assert trace_phi(b, omega) == pytest.approx(expected, rel=1e-12)


def test_trace_phi_matches_dense_oracle():
    Q = rng.standard_normal((8, 3))
    b = orthonormalize(Q)
    omega = rng.uniform(0.0, 3.0, 8)
    assert trace_phi(b, omega) == pytest.approx(dense_trace_phi(Q, omega), rel=1e-10)


def test_trace_phi_nonnegative():
    for _ in range(20):
        Q = rng.standard_normal((14, 5))
        b = orthonormalize(Q)
        omega = rng.uniform(0.0, 2.0, 14) ** 2
        assert trace_phi(b, omega) >= -1e-12


def test_trace_phi_rejects_negative_omega():
    b = orthonormalize(rng.standard_normal((6, 2)))
    with pytest.raises(ValidationError):
        trace_phi(b, np.array([1.0, -0.1, 1, 1, 1, 1]))


def test_length_mismatch_raises():
    b = orthonormalize(rng.standard_normal((6, 2)))
    with pytest.raises(DimensionMismatch):
        quad_form_P(b, np.ones(5))
    with pytest.raises(DimensionMismatch):
        quad_form_P_minus_D(b, np.ones(7))
    with pytest.raises(DimensionMismatch):
        trace_phi(b, np.ones(5))


def test_kron_bundle_spans_product_space():
    left = np.linalg.qr(rng.standard_normal((7, 3)))[0]
    right = np.linalg.qr(rng.standard_normal((4, 2)))[0]
    b = kron_bundle(left, right)
    assert b.K == 6
    np.testing.assert_allclose(b.q_orth.T @ b.q_orth, np.eye(6), atol=1e-12)
    # projector equals the product of the marginal projectors
    P = np.kron(left @ left.T, right @ right.T)
    np.testing.assert_allclose(b.q_orth @ b.q_orth.T, P, atol=1e-12)


def test_leverage_warning_flag():
    b = ProjectionBundle(q_orth=np.eye(5)[:, :2])
    with pytest.warns(RuntimeWarning):
        assert b.leverage_warning()
    spread = orthonormalize(np.ones((50, 1)))
    assert not spread.leverage_warning()
