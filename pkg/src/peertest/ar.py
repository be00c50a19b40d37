"""Tests for the presence of peer effects with dyad-specific coefficients.

The null hypothesis is that every dyad-specific peer-effect coefficient is
zero, so the restricted model is an ordinary regression of ``y`` on ``X``
(after two-way demeaning when fixed effects are present).  The statistic is a
centered quadratic form of the restricted residuals in the projector onto the
span of the peer-characteristic instruments, standardized to be asymptotically
standard normal as the instrument count grows with the sample.

Two centerings are implemented: jackknife centering (subtracting the
projector's diagonal), robust to heteroskedasticity but only valid without
fixed effects, and mean centering (subtracting ``K*/N*`` times the residual
sum of squares), used after the within transformation with i.i.d. errors.
The mean-centered variance is estimated three ways:

* ``fe_jl``   - with the estimated excess kurtosis and leverage dispersion;
* ``fe_din``  - ``2 sigma^4`` (valid when K^2/N is negligible);
* ``fe_ag``   - ``2 sigma^4 (1 - K/N)`` (valid for mesokurtic errors or
  balanced leverage).

A conventional t-test of a homogeneous peer effect under a user-supplied
adjacency matrix is included as a comparator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    DegenerateX,
    DimensionMismatch,
    NonFiniteValue,
    NonPositivePhi,
    TooManyInstruments,
    ValidationError,
    WeakOrCollinearIV,
)
from .instruments import (
    RANK_TOL,
    InstrumentMatrix,
    IvSpec,
    PeerStructure,
    assemble_Q,
    build_Z,
    default_peer_structure,
)
from .kurtosis import KurtosisEstimate, excess_kurtosis
from .panel import Panel, TransformedPanel, demean_two_way, validate_panel, within_transform
from .projection import ProjectionBundle, orthonormalize, quad_form_P, \
    quad_form_P_minus_D, trace_phi

VARIANT_JACKKNIFE = "jackknife"
VARIANT_FE_JL = "fe_jl"
VARIANT_FE_DIN = "fe_din"
VARIANT_FE_AG = "fe_ag"
FE_VARIANTS = (VARIANT_FE_JL, VARIANT_FE_DIN, VARIANT_FE_AG)

#: Residual norms below this fraction of the outcome norm count as an exact fit.
ZERO_RESIDUAL_RTOL = 1e-12


@dataclass(frozen=True)
class TestResult:
    """Outcome of one peer-effect test."""

    statistic: float
    quad_form: float
    K: int
    L: int
    N: int
    N_star: int | None
    phi_hat: float
    sigma2_hat: float
    kurtosis_hat: float | None
    lam: float
    p_normal: float
    p_chisq: float | None
    leverage_warning: bool
    variant: str


@dataclass(frozen=True)
class ChisqDecision:
    """Chi-square decision rule: reject iff the recentered statistic reaches
    the upper chi-square quantile with ``K* - L`` degrees of freedom."""

    reject: bool
    transformed: float
    critical: float
    df: int
    level: float


@dataclass(frozen=True)
class TslsResult:
    """Two-stage least squares t-test of a homogeneous peer effect."""

    rho_hat: float
    t_stat: float
    p_value: float


def residualize(yv: np.ndarray, Xm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares residuals and coefficients of ``yv`` on ``Xm``.

    Raises :class:`DegenerateX` if ``Xm`` is rank deficient.
    """
    yv = np.asarray(yv, dtype=float).reshape(-1)
    Xm = np.asarray(Xm, dtype=float)
    if Xm.ndim == 1:
        Xm = Xm[:, None]
    if Xm.shape[0] != yv.shape[0]:
        raise DimensionMismatch(f"y has {yv.shape[0]} rows, X has {Xm.shape[0]}")
    beta, _, rank, _ = np.linalg.lstsq(Xm, yv, rcond=None)
    if rank < Xm.shape[1]:
        raise DegenerateX(f"regressor matrix is rank deficient ({rank} < {Xm.shape[1]})")
    return yv - Xm @ beta, beta


def fe_variance(variant: str, sigma2: float, kappa: float, mean_p2: float,
                lam: float) -> float:
    """Variance of the mean-centered quadratic form, per variant.

    ``mean_p2`` is the average squared leverage ``(1/K) sum_i p_ii^2`` and
    ``lam = K/N``.  Injecting ``kappa = 0`` makes ``fe_jl`` coincide with
    ``fe_ag`` exactly.
    """
    if variant == VARIANT_FE_JL:
        return kappa * (mean_p2 - lam) + 2.0 * sigma2**2 * (1.0 - lam)
    if variant == VARIANT_FE_DIN:
        return 2.0 * sigma2**2
    if variant == VARIANT_FE_AG:
        return 2.0 * sigma2**2 * (1.0 - lam)
    raise ValidationError(f"unknown fixed-effects variant {variant!r}")


def decide_chisq(statistic: float, k_star: int, l: int, tau: float) -> ChisqDecision:
    """Apply the chi-square rule at level ``tau``.

    Rejects iff ``sqrt(2 K*) statistic + K* >= q_{K*-L}(1 - tau)``.
    """
    if k_star <= l:
        raise ValidationError(f"need K* > L, got K* = {k_star}, L = {l}")
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"level must be in (0, 1), got {tau}")
    df = k_star - l
    transformed = float(np.sqrt(2.0 * k_star) * statistic + k_star)
    critical = float(stats.chi2.ppf(1.0 - tau, df))
    return ChisqDecision(
        reject=bool(transformed >= critical),
        transformed=transformed,
        critical=critical,
        df=df,
        level=tau,
    )


def decide_normal(statistic: float, tau: float) -> bool:
    """Upper one-sided normal rule: reject iff the statistic reaches z_{1-tau}."""
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"level must be in (0, 1), got {tau}")
    return bool(statistic >= stats.norm.ppf(1.0 - tau))


# --- helpers ----------------------------------------------------------------

def _centered_basis(n: int) -> np.ndarray:
    """Orthonormal basis (n x (n-1)) of the zero-sum subspace of R^n (Helmert)."""
    B = np.zeros((n, n - 1))
    for k in range(1, n):
        B[:k, k - 1] = 1.0
        B[k, k - 1] = -float(k)
        B[:, k - 1] /= np.sqrt(k * (k + 1.0))
    return B


def _check_transformed_regressors(p: Panel, X_star: np.ndarray) -> None:
    # a column annihilated by the demeaning (e.g. an intercept) cannot stay in X
    for ell in range(X_star.shape[1]):
        scale = max(float(np.linalg.norm(p.X[:, ell])), 1.0)
        if np.linalg.norm(X_star[:, ell]) <= 1e-13 * scale:
            raise DegenerateX(
                f"regressor column {ell + 1} is numerically zero after the within "
                "transformation (constants and pure fixed-effect patterns are absorbed)"
            )


def _complete_peer_bundle(p: Panel, tp: TransformedPanel, spec: IvSpec,
                          rank_tol: float) -> ProjectionBundle | None:
    """Structured basis of span([X*, Z*]) for complete peers with q = 1.

    Every transformed instrument column is the Kronecker product of a
    time-demeaned characteristic series and a demeaned indicator, so the span
    is the tensor product of the two component spans whenever the n series
    are linearly independent; regressor columns outside that space are
    appended.  Returns None when the structure does not apply, in which case
    the caller falls back to the generic column-by-column construction.
    """
    if spec.q(p.L) != 1 or p.n > p.T - 1:
        return None
    w = spec.combination_matrix(p.L)[:, 0]
    series = (p.X @ w).reshape(p.T, p.n)  # [t, i]
    series = series - series.mean(axis=0)
    col_norms = np.linalg.norm(series, axis=0)
    if (col_norms == 0).any():
        return None
    q_u, r_u = np.linalg.qr(series)
    if (np.abs(np.diag(r_u)) <= rank_tol * col_norms).any():
        return None
    core = np.kron(q_u, _centered_basis(p.n))

    extras = []
    for ell in range(tp.X_star.shape[1]):
        v = tp.X_star[:, ell].copy()
        nrm0 = np.linalg.norm(v)
        for _ in range(2):
            v -= core @ (core.T @ v)
            for e in extras:
                v -= e * (e @ v)
        nrm = np.linalg.norm(v)
        if nrm > rank_tol * nrm0:
            extras.append(v / nrm)
    if extras:
        return ProjectionBundle(q_orth=np.column_stack([core, *extras]))
    return ProjectionBundle(q_orth=core)


def _general_fe_bundle(p: Panel, tp: TransformedPanel, peers: PeerStructure,
                       spec: IvSpec, rank_tol: float) -> tuple[ProjectionBundle, InstrumentMatrix]:
    zm = build_Z(p, peers, spec)
    Z_star = demean_two_way(zm.matrix.toarray(), p.n, p.T)
    im = assemble_Q(tp.X_star, Z_star, tol=rank_tol, z_origins=zm.origins)
    return orthonormalize(im), im


@dataclass
class _FeContext:
    """Everything the fixed-effects variants share for one panel."""

    p: Panel
    tp: TransformedPanel
    bundle: ProjectionBundle
    resid: np.ndarray
    beta_hat: np.ndarray
    sigma2: float
    kurt: KurtosisEstimate
    quad: float
    K: int
    L: int
    leverage_warning: bool
    degenerate: bool

    @property
    def lam(self) -> float:
        return self.K / self.p.N

    @property
    def mean_p2(self) -> float:
        return float((self.bundle.leverage**2).sum()) / self.K


def _fe_context(p: Panel, peers: PeerStructure | None, spec: IvSpec | None,
                rank_tol: float) -> _FeContext:
    validate_panel(p)
    peers = default_peer_structure(p.n) if peers is None else peers
    spec = IvSpec("full") if spec is None else spec
    tp = within_transform(p)
    _check_transformed_regressors(p, tp.X_star)

    bundle = None
    if peers.is_complete():
        bundle = _complete_peer_bundle(p, tp, spec, rank_tol)
    if bundle is None:
        bundle, _ = _general_fe_bundle(p, tp, peers, spec, rank_tol)
    K = bundle.K
    if K >= tp.N_star:
        raise TooManyInstruments(
            f"K* = {K} instruments with effective sample size N* = {tp.N_star}"
        )
    if K <= p.L:
        raise TooManyInstruments(f"K* = {K} must exceed the regressor count L = {p.L}")

    resid, beta_hat = residualize(tp.y_star, tp.X_star)
    rss = float(resid @ resid)
    scale = max(float(np.linalg.norm(p.y)), 1.0)
    degenerate = np.sqrt(rss) <= ZERO_RESIDUAL_RTOL * scale
    sigma2 = rss / tp.N_star
    quad = quad_form_P(bundle, resid) - (K / tp.N_star) * rss
    kurt = excess_kurtosis(resid, p.n, p.T)
    warn = bundle.leverage_warning()
    return _FeContext(
        p=p, tp=tp, bundle=bundle, resid=resid, beta_hat=beta_hat, sigma2=sigma2,
        kurt=kurt, quad=quad, K=K, L=p.L, leverage_warning=warn, degenerate=degenerate,
    )


def _fe_result(ctx: _FeContext, variant: str) -> TestResult:
    df = ctx.K - ctx.L
    if ctx.degenerate:
        # exact fit: the statistic is identically zero by convention
        return TestResult(
            statistic=0.0, quad_form=0.0, K=ctx.K, L=ctx.L, N=ctx.p.N,
            N_star=ctx.tp.N_star, phi_hat=0.0, sigma2_hat=0.0, kurtosis_hat=0.0,
            lam=ctx.lam, p_normal=0.5, p_chisq=float(stats.chi2.sf(ctx.K, df)),
            leverage_warning=ctx.leverage_warning, variant=variant,
        )
    phi = fe_variance(variant, ctx.sigma2, ctx.kurt.kappa_hat, ctx.mean_p2, ctx.lam)
    if phi <= 0.0:
        raise NonPositivePhi(
            f"variance estimate {phi:.3e} is not positive for variant {variant!r} "
            f"(kappa_hat = {ctx.kurt.kappa_hat:.3e})"
        )
    statistic = ctx.quad / (np.sqrt(ctx.K) * np.sqrt(phi))
    transformed = np.sqrt(2.0 * ctx.K) * statistic + ctx.K
    return TestResult(
        statistic=float(statistic),
        quad_form=float(ctx.quad),
        K=ctx.K,
        L=ctx.L,
        N=ctx.p.N,
        N_star=ctx.tp.N_star,
        phi_hat=float(phi),
        sigma2_hat=float(ctx.sigma2),
        kurtosis_hat=float(ctx.kurt.kappa_hat),
        lam=float(ctx.lam),
        p_normal=float(stats.norm.sf(statistic)),
        p_chisq=float(stats.chi2.sf(transformed, df)),
        leverage_warning=ctx.leverage_warning,
        variant=variant,
    )


def ar_fe(p: Panel, peers: PeerStructure | None = None, spec: IvSpec | None = None,
          variant: str = VARIANT_FE_JL, *, rank_tol: float = RANK_TOL) -> TestResult:
    """Peer-effect test with individual and period fixed effects.

    Applies the two-way within transformation, builds the instrument span
    from the transformed regressors and peer blocks, and mean-centers the
    residual quadratic form.  ``variant`` picks the variance estimator (see
    module docstring).

    Parameters
    ----------
    p : Panel
        Balanced panel; validated on entry.
    peers : PeerStructure, optional
        Potential-peer sets; defaults to everyone-but-self.
    spec : IvSpec, optional
        Instrument construction rule; defaults to ``full``.
    variant : str
        One of ``"fe_jl"``, ``"fe_din"``, ``"fe_ag"``.
    """
    if variant not in FE_VARIANTS:
        raise ValidationError(f"variant {variant!r} not one of {FE_VARIANTS}")
    return _fe_result(_fe_context(p, peers, spec, rank_tol), variant)


def ar_fe_variants(p: Panel, peers: PeerStructure | None = None,
                   spec: IvSpec | None = None,
                   variants: tuple[str, ...] = FE_VARIANTS, *,
                   rank_tol: float = RANK_TOL) -> dict[str, TestResult]:
    """All requested fixed-effects variants from one shared factorization."""
    ctx = _fe_context(p, peers, spec, rank_tol)
    return {v: _fe_result(ctx, v) for v in variants}


def ar_no_fe(p: Panel, peers: PeerStructure | None = None,
             spec: IvSpec | None = None, *, rank_tol: float = RANK_TOL) -> TestResult:
    """Peer-effect test without fixed effects (jackknife centering).

    Uses the untransformed regressors and instruments; the centering removes
    the projector's diagonal, which keeps the statistic valid under
    heteroskedasticity of unknown form.
    """
    validate_panel(p)
    peers = default_peer_structure(p.n) if peers is None else peers
    spec = IvSpec("full") if spec is None else spec
    zm = build_Z(p, peers, spec)
    im = assemble_Q(p.X, zm, tol=rank_tol)
    bundle = orthonormalize(im)
    if bundle.K <= p.L:
        raise TooManyInstruments(f"K = {bundle.K} must exceed the regressor count L = {p.L}")
    warn = bundle.leverage_warning()

    resid, _ = residualize(p.y, p.X)
    scale = max(float(np.linalg.norm(p.y)), 1.0)
    if np.linalg.norm(resid) <= ZERO_RESIDUAL_RTOL * scale:
        return TestResult(
            statistic=0.0, quad_form=0.0, K=bundle.K, L=p.L, N=p.N, N_star=None,
            phi_hat=0.0, sigma2_hat=0.0, kurtosis_hat=None, lam=bundle.K / p.N,
            p_normal=0.5, p_chisq=None, leverage_warning=warn, variant=VARIANT_JACKKNIFE,
        )
    quad = quad_form_P_minus_D(bundle, resid)
    phi = trace_phi(bundle, resid**2)
    if phi <= 0.0:
        raise NonPositivePhi(f"variance estimate {phi:.3e} is not positive")
    statistic = quad / (np.sqrt(bundle.K) * np.sqrt(phi))
    return TestResult(
        statistic=float(statistic),
        quad_form=float(quad),
        K=bundle.K,
        L=p.L,
        N=p.N,
        N_star=None,
        phi_hat=float(phi),
        sigma2_hat=float(resid @ resid / p.N),
        kurtosis_hat=None,
        lam=float(bundle.K / p.N),
        p_normal=float(stats.norm.sf(statistic)),
        p_chisq=None,
        leverage_warning=warn,
        variant=VARIANT_JACKKNIFE,
    )


def tsls_peer_test(p: Panel, W: np.ndarray, *, rank_tol: float = RANK_TOL) -> TslsResult:
    """t-test of a homogeneous peer effect under a user-supplied network.

    Estimates ``rho`` in the within-transformed spatial-lag regression of
    ``y*`` on ``[(W-lag of y)*, X*]`` by two-stage least squares with the
    transformed ``W``-lag of ``X`` instrumenting the lag of ``y``, and returns
    the conventional homoskedastic t-statistic with a two-sided normal
    p-value.

    Raises
    ------
    WeakOrCollinearIV
        If the transformed instrument for the peer lag is numerically
        collinear with the transformed regressors.  This is exactly the
        linear-in-means degeneracy: for the equal-weights complete network
        the lag instrument collapses onto ``X*`` after two-way demeaning, so
        a homogeneous peer effect is not identified.
    """
    validate_panel(p)
    W = np.asarray(W, dtype=float)
    if W.shape != (p.n, p.n):
        raise DimensionMismatch(f"W has shape {W.shape}, expected ({p.n}, {p.n})")
    if not np.isfinite(W).all():
        raise NonFiniteValue("W contains non-finite values")
    if np.any(np.diag(W) != 0):
        raise ValidationError("adjacency matrix must have a zero diagonal")

    n, T = p.n, p.T
    Y = p.y.reshape(T, n)
    lag_y = (Y @ W.T).reshape(-1)
    lag_X = np.column_stack([(p.X[:, k].reshape(T, n) @ W.T).reshape(-1)
                             for k in range(p.L)])
    y_s = demean_two_way(p.y, n, T)
    X_s = demean_two_way(p.X, n, T)
    _check_transformed_regressors(p, X_s)
    ly_s = demean_two_way(lag_y, n, T)
    lX_s = demean_two_way(lag_X, n, T)

    # relevance: at least one instrument column outside span(X*)
    coef, _, _, _ = np.linalg.lstsq(X_s, lX_s, rcond=None)
    resid_ins = lX_s - X_s @ coef
    rel = np.linalg.norm(resid_ins, axis=0) / np.maximum(
        np.linalg.norm(lX_s, axis=0), np.finfo(float).tiny
    )
    if (rel <= rank_tol).all():
        raise WeakOrCollinearIV(
            "transformed peer-lag instrument is numerically collinear with the "
            "transformed regressors, so the homogeneous peer effect is not "
            "identified after two-way demeaning; this is the linear-in-means "
            "degeneracy (W proportional to the equal-weights complete network)"
        )

    R = np.column_stack([ly_s, X_s])
    H = np.column_stack([lX_s, X_s])
    first, _, _, _ = np.linalg.lstsq(H, R, rcond=None)
    R_hat = H @ first
    G = R_hat.T @ R_hat
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise WeakOrCollinearIV(
            "projected regressor cross-product is numerically singular; the "
            "peer-lag instrument carries no identifying variation"
        )
    theta = np.linalg.solve(G, R_hat.T @ y_s)
    resid = y_s - R @ theta
    dof = (n - 1) * (T - 1) - R.shape[1]
    sigma2 = float(resid @ resid) / dof
    var = sigma2 * np.linalg.inv(G)
    t_stat = float(theta[0] / np.sqrt(var[0, 0]))
    return TslsResult(
        rho_hat=float(theta[0]),
        t_stat=t_stat,
        p_value=float(2.0 * stats.norm.sf(abs(t_stat))),
    )
