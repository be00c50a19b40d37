import numpy as np
import pytest

from peertest import (
    DimensionMismatch,
    Panel,
    UnbalancedPanel,
    build_J,
    excess_kurtosis,
    pi_constants,
    residualize,
    within_transform,
)

rng = np.random.default_rng(31)


def brute_force_pi(n, T):
    """Oracle: sum the powers of the dense centering matrix directly."""
    J = build_J(n, T)
    return float((np.diag(J) ** 2).sum()), float((J**4).sum())


def test_pi_constants_2x2():
    pi1, pi2 = pi_constants(2, 2)
    assert pi1 == pytest.approx(0.25, abs=1e-15)
    assert pi2 == pytest.approx(1.0 / 16.0, abs=1e-15)


@pytest.mark.parametrize("n,T", [(2, 2), (3, 5), (5, 3), (4, 9), (12, 7)])
def test_pi_constants_match_brute_force(n, T):
    pi1, pi2 = pi_constants(n, T)
    b1, b2 = brute_force_pi(n, T)
    assert pi1 == pytest.approx(b1, rel=1e-12)
    assert pi2 == pytest.approx(b2, rel=1e-12)


def test_pi_constants_rejects_degenerate():
    with pytest.raises(UnbalancedPanel):
        pi_constants(1, 5)
    with pytest.raises(UnbalancedPanel):
        pi_constants(3, 1)


def test_zero_residuals_give_zero_kappa():
    est = excess_kurtosis(np.zeros(12), 3, 4)
    assert est.kappa_hat == 0.0
    assert est.mu4_hat == 0.0
    assert est.sigma2_hat == 0.0


def test_length_mismatch():
    with pytest.raises(DimensionMismatch):
        excess_kurtosis(np.zeros(11), 3, 4)


def test_scaling_and_sign_invariance():
    r = rng.standard_normal(5 * 8)
    base = excess_kurtosis(r, 5, 8)
    flipped = excess_kurtosis(-r, 5, 8)
    assert flipped.kappa_hat == base.kappa_hat
    c = 2.5
    scaled = excess_kurtosis(c * r, 5, 8)
    assert scaled.mu4_hat == pytest.approx(c**4 * base.mu4_hat, rel=1e-12)
    assert scaled.sigma2_hat == pytest.approx(c**2 * base.sigma2_hat, rel=1e-12)
    assert scaled.kappa_hat == pytest.approx(c**4 * base.kappa_hat, rel=1e-12)


def fe_residuals(n, T, eps, beta=1.0, seed=0):
    """Two-way-transformed regression residuals for errors ``eps`` (n, T)."""
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, T))
    xi = r.uniform(-1, 1, n)
    eta = r.uniform(-1, 1, T)
    y = beta * x + xi[:, None] + eta[None, :] + eps
    p = Panel(y=y.T.reshape(-1), X=x.T.reshape(-1, 1), n=n, T=T)
    tp = within_transform(p)
    resid, _ = residualize(tp.y_star, tp.X_star)
    return resid


def test_normal_errors_near_zero_excess(seed=5):
    n, T, reps = 20, 100, 60
    vals = []
    for rep in range(reps):
        r = np.random.default_rng([seed, rep])
        eps = r.standard_normal((n, T))
        resid = fe_residuals(n, T, eps, seed=rep)
        vals.append(excess_kurtosis(resid, n, T).kappa_hat)
    assert abs(np.mean(vals)) <= 0.05  # tight at nT = 2000 with 60 replications


def test_uniform_errors_match_population_excess():
    # U(-a, a) has excess kurtosis -1.2 var^2; light tails make this precise
    n, T, reps = 20, 100, 60
    vals = []
    for rep in range(reps):
        r = np.random.default_rng([99, rep])
        eps = r.uniform(-1.0, 1.0, (n, T))
        resid = fe_residuals(n, T, eps, seed=10_000 + rep)
        vals.append(excess_kurtosis(resid, n, T).kappa_hat)
    population = -1.2 * (1.0 / 3.0) ** 2
    assert np.mean(vals) == pytest.approx(population, abs=0.02)


def test_variance_shrinks_with_sample_size():
    # consistency drift: dispersion of kappa-hat falls along an nT grid
    grid = [(5, 20), (10, 60), (20, 150)]
    spreads = []
    for n, T in grid:
        vals = []
        for rep in range(20):
            r = np.random.default_rng([n, T, rep])
            eps = r.standard_normal((n, T))
            resid = fe_residuals(n, T, eps, seed=rep * 7 + n)
            vals.append(excess_kurtosis(resid, n, T).kappa_hat)
        spreads.append(np.var(vals))
    inversions = sum(spreads[k + 1] > spreads[k] for k in range(len(spreads) - 1))
    assert inversions <= 1
