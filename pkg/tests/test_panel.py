import numpy as np
import pytest

from peertest import (
    DimensionMismatch,
    InstanceTooLarge,
    NonFiniteValue,
    Panel,
    UnbalancedPanel,
    build_J,
    demean_two_way,
    stack_index,
    validate_panel,
    within_transform,
)

rng = np.random.default_rng(1234)


def random_panel(n, T, L=2, seed=None):
    r = np.random.default_rng(seed if seed is not None else rng.integers(2**32))
    X = r.standard_normal((n * T, L))
    y = X @ r.standard_normal(L) + r.standard_normal(n * T)
    return Panel(y=y, X=X, n=n, T=T)


@pytest.mark.parametrize(
    "i,t,n,expected",
    [(1, 1, 5, 1), (5, 1, 5, 5), (2, 3, 4, 10), (3, 1, 3, 3), (1, 2, 3, 4)],
)
def test_stack_index(i, t, n, expected):
    assert stack_index(i, t, n) == expected


def test_stack_index_out_of_range():
    with pytest.raises(DimensionMismatch):
        stack_index(0, 1, 5)
    with pytest.raises(DimensionMismatch):
        stack_index(6, 1, 5)
    with pytest.raises(DimensionMismatch):
        stack_index(1, 0, 5)


def test_validate_accepts_well_formed():
    p = random_panel(3, 4)
    assert validate_panel(p) is p


def test_validate_rejects_bad_length():
    p = random_panel(3, 4)
    bad = Panel(y=p.y[:11], X=p.X, n=3, T=4)
    with pytest.raises(DimensionMismatch):
        validate_panel(bad)


def test_validate_rejects_non_finite():
    p = random_panel(3, 4)
    y = p.y.copy()
    y[5] = np.nan
    with pytest.raises(NonFiniteValue):
        validate_panel(Panel(y=y, X=p.X, n=3, T=4))
    X = p.X.copy()
    X[2, 1] = np.inf
    with pytest.raises(NonFiniteValue):
        validate_panel(Panel(y=p.y, X=X, n=3, T=4))


@pytest.mark.parametrize("n,T", [(1, 5), (5, 1)])
def test_validate_rejects_degenerate_dimensions(n, T):
    with pytest.raises(UnbalancedPanel):
        validate_panel(Panel(y=np.zeros(n * T), X=np.zeros((n * T, 1)), n=n, T=T))


def test_within_annihilates_constant():
    p = Panel(y=np.full(12, 3.7), X=np.ones((12, 1)) * 2.0, n=3, T=4)
    tp = within_transform(p)
    assert np.abs(tp.y_star).max() == pytest.approx(0.0, abs=1e-14)
    assert np.abs(tp.X_star).max() == pytest.approx(0.0, abs=1e-14)
    assert tp.N_star == 2 * 3


def test_within_annihilates_additive_effects():
    n, T = 5, 7
    a = rng.standard_normal(n)
    b = rng.standard_normal(T)
    y = (a[None, :] + b[:, None]).reshape(-1)  # entry (t, i) = a_i + b_t
    p = Panel(y=y, X=rng.standard_normal((n * T, 1)), n=n, T=T)
    tp = within_transform(p)
    assert np.abs(tp.y_star).max() < 1e-12 * max(np.abs(y).max(), 1.0)


def test_within_matches_dense_J():
    p = random_panel(3, 4, seed=99)
    J = build_J(3, 4)
    tp = within_transform(p)
    np.testing.assert_allclose(tp.y_star, J @ p.y, atol=1e-12)
    np.testing.assert_allclose(tp.X_star, J @ p.X, atol=1e-12)


@pytest.mark.parametrize("n,T", [(2, 3), (4, 6), (7, 9), (13, 11), (40, 50)])
def test_within_matches_dense_J_many_sizes(n, T):
    p = random_panel(n, T, L=1)
    J = build_J(n, T)
    tp = within_transform(p)
    scale = np.linalg.norm(p.y)
    assert np.abs(tp.y_star - J @ p.y).max() <= 1e-12 * scale


def test_within_idempotent():
    p = random_panel(6, 9)
    tp = within_transform(p)
    twice = demean_two_way(tp.y_star, 6, 9)
    np.testing.assert_allclose(twice, tp.y_star, atol=1e-12 * np.linalg.norm(p.y))


def test_within_total_sum_zero():
    p = random_panel(8, 5)
    tp = within_transform(p)
    assert abs(tp.y_star.sum()) <= 1e-10 * np.linalg.norm(p.y)


def test_build_J_2x2_entries():
    J = build_J(2, 2)
    assert J.shape == (4, 4)
    np.testing.assert_allclose(np.abs(J), 0.25, atol=1e-15)
    np.testing.assert_allclose(np.diag(J), 0.25, atol=1e-15)


@pytest.mark.parametrize("n,T", [(2, 2), (3, 5), (6, 4), (10, 10)])
def test_build_J_trace_and_idempotence(n, T):
    J = build_J(n, T)
    assert np.trace(J) == pytest.approx((n - 1) * (T - 1), abs=1e-9)
    np.testing.assert_allclose(J @ J, J, atol=1e-12)
    np.testing.assert_allclose(J, J.T, atol=1e-15)


def test_build_J_rank_by_eigenvalues():
    for n, T in [(2, 3), (3, 5), (4, 4)]:
        w = np.linalg.eigvalsh(build_J(n, T))
        assert int(np.sum(w > 0.5)) == (n - 1) * (T - 1)
        assert np.all((np.abs(w) < 1e-10) | (np.abs(w - 1) < 1e-10))


def test_build_J_cap():
    with pytest.raises(InstanceTooLarge):
        build_J(101, 101)
    build_J(101, 99)  # right at the boundary is allowed
