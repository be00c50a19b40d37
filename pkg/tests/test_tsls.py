import numpy as np
import pytest

from peertest import (
    ValidationError,
    WeakOrCollinearIV,
    gen_circular_alpha,
    gen_panel,
    McConfig,
    tsls_peer_test,
)


def lim_matrix(n):
    return (np.ones((n, n)) - np.eye(n)) / (n - 1)


def null_panel(n, T, seed):
    cfg = McConfig(n=n, T=T, reps=1, seed=0)
    return gen_panel(cfg, np.zeros((n, n)), np.random.default_rng(seed))


def test_linear_in_means_matrix_raises():
    p = null_panel(8, 20, seed=1)
    with pytest.raises(WeakOrCollinearIV) as exc:
        tsls_peer_test(p, lim_matrix(8))
    assert "linear-in-means" in str(exc.value)


def test_scaled_complete_matrix_also_raises():
    p = null_panel(6, 18, seed=2)
    with pytest.raises(WeakOrCollinearIV):
        tsls_peer_test(p, 0.4 * (np.ones((6, 6)) - np.eye(6)))


def test_nonzero_diagonal_rejected():
    p = null_panel(5, 12, seed=3)
    W = lim_matrix(5)
    W[2, 2] = 0.1
    with pytest.raises(ValidationError):
        tsls_peer_test(p, W)


def test_shape_mismatch_rejected():
    p = null_panel(5, 12, seed=4)
    with pytest.raises(Exception):
        tsls_peer_test(p, np.zeros((4, 4)))


def test_null_size_close_to_nominal_under_correct_network():
    n, T, reps = 10, 40, 1000
    W = gen_circular_alpha(n, 0.5, 1)  # row-normalized ring
    hits = 0
    for rep in range(reps):
        p = null_panel(n, T, seed=[50, rep])
        res = tsls_peer_test(p, W)
        hits += res.p_value <= 0.05
    assert hits / reps == pytest.approx(0.05, abs=0.025)


def test_power_and_estimate_under_correct_network():
    n, T, reps = 12, 40, 150
    A = gen_circular_alpha(n, 0.3, 1)
    W = gen_circular_alpha(n, 0.5, 1)
    cfg = McConfig(n=n, T=T, reps=1, rho=0.3)
    hits, rho_hats = 0, []
    for rep in range(reps):
        p = gen_panel(cfg, A, np.random.default_rng([60, rep]))
        res = tsls_peer_test(p, W)
        hits += res.p_value <= 0.05
        rho_hats.append(res.rho_hat)
    assert hits / reps >= 0.9
    # with W = A / 0.6 the estimand is 0.6; the mean estimate should be near it
    assert np.mean(rho_hats) == pytest.approx(0.6, abs=0.05)


def test_t_stat_and_p_value_consistent():
    p = null_panel(9, 25, seed=7)
    res = tsls_peer_test(p, gen_circular_alpha(9, 0.5, 1))
    from scipy import stats

    assert res.p_value == pytest.approx(2 * stats.norm.sf(abs(res.t_stat)), rel=1e-12)
