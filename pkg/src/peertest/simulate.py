"""Data-generating processes, network generators, and the Monte Carlo runner.

Outcomes are generated from the simultaneous system ``y_t = A y_t + beta x_t
+ u_t`` with ``u_it = xi_i + eta_t + eps_it``; the dyad-coefficient matrix
``A`` comes from a random graph (fixed or uniform weights), a circular
network, or is zero under the null.  Rejection rates, the bias of the naive
fixed-effects slope, and its confidence-interval coverage are aggregated over
replications with replication-indexed random streams, so results do not
depend on execution order or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ar import FE_VARIANTS, ar_fe_variants, decide_chisq, residualize, tsls_peer_test
from .errors import SingularSystem, ValidationError, WeakOrCollinearIV
from .instruments import IvSpec
from .panel import Panel, within_transform

DGPS = ("normal", "lognormal")
NETWORKS = ("none", "random_fixed", "random_uniform", "circular")
MISSPECS = ("indicator", "circle")
VARIANT_ALIASES = {"jl": "fe_jl", "din": "fe_din", "ag": "fe_ag", "tsls": "tsls"}

#: Condition-number ceiling for treating (I - A) as solvable.
SOLVE_COND_CAP = 1e12


@dataclass(frozen=True)
class McConfig:
    """One Monte Carlo cell.

    ``network`` picks the true dyad-coefficient generator, ``misspec`` the
    adjacency matrix handed to the comparator t-test ("indicator" row-
    normalizes the true link pattern; "circle" connects each individual to
    its two ``misspec_m``-th ring neighbors with weight one half).
    """

    n: int
    T: int
    reps: int = 5000
    rho: float = 0.0
    beta: float = 1.0
    nd: float = 0.0
    dgp: str = "normal"
    network: str = "none"
    m_true: int = 1
    misspec: str | None = None
    misspec_m: int = 1
    level: float = 0.05
    seed: int = 0
    variants: tuple[str, ...] = ("fe_jl",)
    keep_details: bool = False
    max_redraws: int = 100

    def __post_init__(self):
        if self.reps < 1:
            raise ValidationError(f"reps must be >= 1, got {self.reps}")
        if not 0.0 <= self.nd <= 1.0:
            raise ValidationError(f"network density must be in [0, 1], got {self.nd}")
        if not 0.0 < self.level < 1.0:
            raise ValidationError(f"level must be in (0, 1), got {self.level}")
        if self.dgp not in DGPS:
            raise ValidationError(f"dgp {self.dgp!r} not one of {DGPS}")
        if self.network not in NETWORKS:
            raise ValidationError(f"network {self.network!r} not one of {NETWORKS}")
        if self.misspec is not None and self.misspec not in MISSPECS:
            raise ValidationError(f"misspec {self.misspec!r} not one of {MISSPECS}")
        normalized = tuple(VARIANT_ALIASES.get(v, v) for v in self.variants)
        for v in normalized:
            if v != "tsls" and v not in FE_VARIANTS:
                raise ValidationError(f"unknown test variant {v!r}")
        object.__setattr__(self, "variants", normalized)


@dataclass
class McResult:
    """Aggregates of one Monte Carlo cell."""

    config: McConfig
    rejection_rate: dict[str, float]
    beta_bias_rel: float
    ci95_coverage: float
    failures: dict[str, int]
    redraws: int
    tsls_rho_mean: float | None
    details: list[dict] | None = None


def check_alpha(A: np.ndarray) -> np.ndarray:
    """Validate a dyad-coefficient (or adjacency) matrix: square, finite, zero diagonal."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise ValidationError("matrix contains non-finite values")
    if np.any(np.diag(A) != 0):
        raise ValidationError("matrix must have a zero diagonal")
    return A


def solvable(A: np.ndarray, cond_cap: float = SOLVE_COND_CAP) -> bool:
    """True if (I - A) is invertible with condition number below the cap."""
    sv = np.linalg.svd(np.eye(A.shape[0]) - A, compute_uv=False)
    return bool(sv[-1] > 0 and sv[0] / sv[-1] < cond_cap)


def gen_random_graph_alpha(n: int, nd: float, weights, rng: np.random.Generator) -> np.ndarray:
    """Random-graph dyad coefficients: round(nd * n(n-1)) directed links.

    ``weights`` is either a number (every selected link gets that
    coefficient) or the string ``"uniform"`` (i.i.d. U(0, 1) weights).
    """
    if not 0.0 <= nd <= 1.0:
        raise ValidationError(f"network density must be in [0, 1], got {nd}")
    A = np.zeros((n, n))
    m = round(nd * n * (n - 1))
    if m == 0:
        return A
    off = np.argwhere(~np.eye(n, dtype=bool))  # row-major order of the n(n-1) dyads
    sel = rng.choice(off.shape[0], size=m, replace=False)
    if isinstance(weights, str):
        if weights != "uniform":
            raise ValidationError(f"weights must be a number or 'uniform', got {weights!r}")
        vals = rng.uniform(0.0, 1.0, size=m)
    else:
        vals = np.full(m, float(weights))
    A[off[sel, 0], off[sel, 1]] = vals
    return A


def gen_circular_alpha(n: int, rho: float, m: int = 1) -> np.ndarray:
    """Ring coefficients: ``rho`` at each individual's two m-th ring neighbors."""
    if not 1 <= m < n / 2:
        raise ValidationError(f"need 1 <= m < n/2, got m={m} with n={n}")
    A = np.zeros((n, n))
    idx = np.arange(n)
    A[idx, (idx + m) % n] = rho
    A[idx, (idx - m) % n] = rho
    return A


def gen_panel(cfg: McConfig, A: np.ndarray, rng: np.random.Generator) -> Panel:
    """Draw one panel from the simultaneous system under ``cfg``.

    Draw order is fixed (x, xi, eta, eps) so that replication streams are
    stable across configurations.

    Raises
    ------
    SingularSystem
        If (I - A) is singular or numerically near singular.
    """
    A = check_alpha(A)
    n, T = cfg.n, cfg.T
    x = rng.standard_normal((n, T))
    xi = rng.uniform(-1.0, 1.0, n)
    eta = rng.uniform(-1.0, 1.0, T)
    if cfg.dgp == "normal":
        eps = rng.standard_normal((n, T))
    else:
        zeta = rng.standard_normal((n, T))
        eps = (np.exp(zeta) - np.exp(0.5)) / math.sqrt(math.exp(2.0) - math.exp(1.0))
    u = xi[:, None] + eta[None, :] + eps
    rhs = cfg.beta * x + u
    if not solvable(A):
        raise SingularSystem("(I - A) is singular or near singular")
    Y = np.linalg.solve(np.eye(n) - A, rhs)
    return Panel(y=Y.T.reshape(-1), X=x.T.reshape(-1, 1), n=n, T=T)


def _true_network(cfg: McConfig, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Draw the dyad matrix for one replication, redrawing unsolvable ones."""
    if cfg.network == "none":
        return np.zeros((cfg.n, cfg.n)), 0
    if cfg.network == "circular":
        A = gen_circular_alpha(cfg.n, cfg.rho, cfg.m_true)
        if not solvable(A):
            raise SingularSystem("circular network yields a singular system")
        return A, 0
    weights = "uniform" if cfg.network == "random_uniform" else cfg.rho
    for attempt in range(cfg.max_redraws + 1):
        A = gen_random_graph_alpha(cfg.n, cfg.nd, weights, rng)
        if solvable(A):
            return A, attempt
    raise SingularSystem(f"no solvable network in {cfg.max_redraws + 1} draws")


def _misspec_W(cfg: McConfig, A: np.ndarray) -> np.ndarray:
    if cfg.misspec == "indicator":
        Wst = (A > 0).astype(float)
        row_sums = Wst.sum(axis=1, keepdims=True)
        return np.divide(Wst, row_sums, out=np.zeros_like(Wst), where=row_sums > 0)
    return gen_circular_alpha(cfg.n, 0.5, cfg.misspec_m)


def _run_rep(cfg: McConfig, rep: int) -> dict:
    rng = np.random.default_rng([cfg.seed, rep])
    rec: dict = {"rep": rep, "redraws": 0}
    try:
        A, redraws = _true_network(cfg, rng)
        rec["redraws"] = redraws
    except SingularSystem:
        rec["network_failed"] = True
        return rec
    panel = gen_panel(cfg, A, rng)

    fe_wanted = tuple(v for v in cfg.variants if v != "tsls")
    if fe_wanted:
        results = ar_fe_variants(panel, spec=IvSpec("full"), variants=fe_wanted)
        for v, res in results.items():
            dec = decide_chisq(res.statistic, res.K, res.L, cfg.level)
            rec[v] = {
                "reject": dec.reject,
                "statistic": res.statistic,
                "p_normal": res.p_normal,
                "p_chisq": res.p_chisq,
            }

    # naive fixed-effects slope ignoring peers: bias and 95% CI coverage
    tp = within_transform(panel)
    resid, beta_hat = residualize(tp.y_star, tp.X_star)
    sigma2 = float(resid @ resid) / tp.N_star
    xtx_inv = np.linalg.inv(tp.X_star.T @ tp.X_star)
    se = math.sqrt(sigma2 * xtx_inv[0, 0])
    rec["beta_bias_rel"] = (float(beta_hat[0]) - cfg.beta) / cfg.beta
    rec["ci95_covers"] = bool(abs(float(beta_hat[0]) - cfg.beta) <= 1.959963984540054 * se)

    if "tsls" in cfg.variants:
        W = _misspec_W(cfg, A)
        try:
            ts = tsls_peer_test(panel, W)
            rec["tsls"] = {
                "reject": ts.p_value <= cfg.level,
                "rho_hat": ts.rho_hat,
                "t_stat": ts.t_stat,
                "p_value": ts.p_value,
            }
        except WeakOrCollinearIV:
            rec["tsls_failed"] = True
    return rec


def _run_chunk(cfg: McConfig, start: int, stop: int) -> list[dict]:
    return [_run_rep(cfg, rep) for rep in range(start, stop)]


def run_mc(cfg: McConfig, n_jobs: int = 1) -> McResult:
    """Run one Monte Carlo cell and aggregate.

    Replication ``rep`` always uses the stream seeded by ``(cfg.seed, rep)``,
    so the result is identical for any ``n_jobs``.
    """
    if n_jobs < 1:
        raise ValidationError(f"n_jobs must be >= 1, got {n_jobs}")
    if n_jobs == 1:
        records = _run_chunk(cfg, 0, cfg.reps)
    else:
        chunk = max(1, math.ceil(cfg.reps / (4 * n_jobs)))
        bounds = [(s, min(s + chunk, cfg.reps)) for s in range(0, cfg.reps, chunk)]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_run_chunk, *zip(*[(cfg, s, e) for s, e in bounds])))
        records = [rec for part in parts for rec in part]
        records.sort(key=lambda r: r["rep"])

    failures = {"network": sum(1 for r in records if r.get("network_failed"))}
    ok = [r for r in records if not r.get("network_failed")]
    rates: dict[str, float] = {}
    for v in cfg.variants:
        if v == "tsls":
            done = [r for r in ok if "tsls" in r]
            failures["tsls"] = sum(1 for r in ok if r.get("tsls_failed"))
            rates[v] = (
                sum(r["tsls"]["reject"] for r in done) / len(done) if done else float("nan")
            )
        else:
            rates[v] = sum(r[v]["reject"] for r in ok) / len(ok) if ok else float("nan")
    rho_hats = [r["tsls"]["rho_hat"] for r in ok if "tsls" in r]
    return McResult(
        config=cfg,
        rejection_rate=rates,
        beta_bias_rel=(
            float(np.mean([r["beta_bias_rel"] for r in ok])) if ok else float("nan")
        ),
        ci95_coverage=(
            float(np.mean([r["ci95_covers"] for r in ok])) if ok else float("nan")
        ),
        failures=failures,
        redraws=sum(r["redraws"] for r in records),
        tsls_rho_mean=float(np.mean(rho_hats)) if rho_hats else None,
        details=records if cfg.keep_details else None,
    )


def result_rows(result: McResult) -> list[dict]:
    """Flatten a cell result into one CSV-ready row per test variant."""
    cfg = result.config
    common = {
        "n": cfg.n, "T": cfg.T, "reps": cfg.reps, "rho": cfg.rho, "beta": cfg.beta,
        "nd": cfg.nd, "dgp": cfg.dgp, "network": cfg.network, "m_true": cfg.m_true,
        "misspec": cfg.misspec or "", "misspec_m": cfg.misspec_m,
        "level": cfg.level, "seed": cfg.seed,
    }
    rows = []
    for v in cfg.variants:
        row = dict(common)
        row["variant"] = v
        row["rejection_rate"] = result.rejection_rate[v]
        row["bias_rel"] = result.beta_bias_rel
        row["ci_coverage"] = result.ci95_coverage
        row["failures"] = result.failures.get("tsls" if v == "tsls" else "network", 0)
        if v == "tsls" and result.tsls_rho_mean is not None:
            row["tsls_rho_mean"] = result.tsls_rho_mean
        rows.append(row)
    return rows
