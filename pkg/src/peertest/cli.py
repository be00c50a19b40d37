"""Command-line front end: CSV ingestion, one-shot tests, simulations, rolling windows.

Input schema
------------
A long-format CSV with one row per (unit, time) cell and columns ``unit``,
``time``, ``y``, ``x1`` .. ``xL``.  The unit-by-time grid must be complete
(balanced panel).  Units sort lexically; times sort lexically unless
``--time-numeric`` is passed.  With ``--wins-produced`` the outcome is built
from box-score columns ``3pt, 2pt, ft, reb, stl, blk, mfg, mft, to, mins``
instead of a ``y`` column.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .ar import (
    TestResult,
    ar_fe,
    ar_no_fe,
    decide_chisq,
    tsls_peer_test,
)
from .errors import (
    DuplicateCell,
    MissingCell,
    NonNumericValue,
    NumericalError,
    ValidationError,
)
from .instruments import IvSpec, PeerStructure
from .panel import Panel, validate_panel
from .simulate import McConfig, result_rows, run_mc

WINS_COLUMNS = ("3pt", "2pt", "ft", "reb", "stl", "blk", "mfg", "mft", "to", "mins")

_VARIANT_FLAG = {"jl": "fe_jl", "din": "fe_din", "ag": "fe_ag"}


@dataclass(frozen=True)
class RollingSpec:
    """Rolling-window layout: window length in periods and stride."""

    window: int = 50
    step: int = 1

    def __post_init__(self):
        if self.window < 2:
            raise ValidationError(f"window must be >= 2, got {self.window}")
        if self.step < 1:
            raise ValidationError(f"step must be >= 1, got {self.step}")


@dataclass(frozen=True)
class WindowPoint:
    """One rolling-window test, or the reason it was skipped."""

    start: int
    stop: int
    statistic: float | None
    p_chisq: float | None
    skipped: bool = False
    reason: str | None = None


def wins_produced(three_pt, two_pt, free_throws, rebounds, steals, blocks,
                  missed_fg, missed_ft, turnovers, minutes):
    """Per-minute win production from box-score counts.

    Weighted sum of makes, rebounds, steals and blocks minus misses and
    turnovers, divided by minutes played.  Accepts scalars or arrays.
    """
    minutes = np.asarray(minutes, dtype=float)
    if np.any(minutes <= 0):
        raise ValidationError("minutes must be positive")
    total = (
        0.064 * np.asarray(three_pt, dtype=float)
        + 0.032 * np.asarray(two_pt, dtype=float)
        + 0.017 * np.asarray(free_throws, dtype=float)
        + 0.034 * np.asarray(rebounds, dtype=float)
        + 0.033 * np.asarray(steals, dtype=float)
        + 0.020 * np.asarray(blocks, dtype=float)
        - 0.034 * np.asarray(missed_fg, dtype=float)
        - 0.015 * np.asarray(missed_ft, dtype=float)
        - 0.034 * np.asarray(turnovers, dtype=float)
    )
    out = total / minutes
    return float(out) if out.ndim == 0 else out


def _numeric(frame: pd.DataFrame, col: str) -> np.ndarray:
    vals = pd.to_numeric(frame[col], errors="coerce")
    if vals.isna().any():
        row = int(np.flatnonzero(vals.isna().to_numpy())[0])
        raise NonNumericValue(f"column {col!r} has a non-numeric value in data row {row + 1}")
    return vals.to_numpy(dtype=float)


def load_panel(path, time_numeric: bool = False, use_wins_produced: bool = False) -> Panel:
    """Read a long-format CSV into a validated, stacking-ordered panel.

    Regressor columns are those named ``x1, x2, ...`` in numeric order.
    Raises :class:`DuplicateCell` / :class:`MissingCell` when the grid is not
    exactly complete and :class:`NonNumericValue` for unparseable numbers.
    """
    frame = pd.read_csv(path, dtype=str).rename(columns=lambda c: c.strip())
    for required in ("unit", "time"):
        if required not in frame.columns:
            raise ValidationError(f"input file lacks the required column {required!r}")
    frame["unit"] = frame["unit"].astype(str)

    dup = frame.duplicated(subset=["unit", "time"])
    if dup.any():
        r = frame[dup].iloc[0]
        raise DuplicateCell(f"(unit={r['unit']!r}, time={r['time']!r}) appears more than once")

    if time_numeric:
        frame["_tkey"] = _numeric(frame, "time")
    else:
        frame["_tkey"] = frame["time"].astype(str)
    units = sorted(frame["unit"].unique())
    times = sorted(frame["_tkey"].unique())
    n, T = len(units), len(times)
    if len(frame) != n * T:
        have = set(zip(frame["unit"], frame["_tkey"]))
        for t in times:
            for u in units:
                if (u, t) not in have:
                    raise MissingCell(f"no row for (unit={u!r}, time={t!r})")
    frame = frame.sort_values(["_tkey", "unit"], kind="mergesort")  # period-major stacking

    x_names = sorted(
        (c for c in frame.columns if re.fullmatch(r"x\d+", c)),
        key=lambda c: int(c[1:]),
    )
    if not x_names:
        raise ValidationError("input file has no regressor columns (x1, x2, ...)")
    X = np.column_stack([_numeric(frame, c) for c in x_names])

    if use_wins_produced:
        missing = [c for c in WINS_COLUMNS if c not in frame.columns]
        if missing:
            raise ValidationError(f"wins-produced mode needs columns {missing}")
        y = wins_produced(*(_numeric(frame, c) for c in WINS_COLUMNS))
    else:
        if "y" not in frame.columns:
            raise ValidationError("input file lacks the outcome column 'y'")
        y = _numeric(frame, "y")

    time_labels = tuple(
        frame["time"].iloc[: n * T : n]
    )  # original labels in sorted period order
    return validate_panel(
        Panel(y=y, X=X, n=n, T=T, unit_labels=tuple(units), time_labels=time_labels)
    )


def load_peer_structure(path, unit_labels: tuple) -> PeerStructure:
    """Read directed pairs (i, j), meaning j is a potential peer of i.

    Entries may be unit labels from the panel or 1-based indices; a header
    row is allowed.  Pairs are grouped into per-individual peer sets; units
    never mentioned as ``i`` get no potential peers.
    """
    pairs = pd.read_csv(path, header=None, dtype=str)
    if pairs.shape[1] < 2:
        raise ValidationError("peer file must have two columns (i, j)")
    label_of = {str(u): k + 1 for k, u in enumerate(unit_labels)}

    def resolve(token: str) -> int | None:
        token = token.strip()
        if token in label_of:
            return label_of[token]
        try:
            idx = int(token)
        except ValueError:
            return None
        return idx if 1 <= idx <= len(unit_labels) else None

    neighbors: list[list[int]] = [[] for _ in unit_labels]
    for row_num, (a, b) in enumerate(zip(pairs[0], pairs[1])):
        i, j = resolve(str(a)), resolve(str(b))
        if i is None or j is None:
            if row_num == 0:  # tolerate a header line
                continue
            raise ValidationError(f"cannot resolve peer pair ({a!r}, {b!r})")
        neighbors[i - 1].append(j)
    return PeerStructure(tuple(tuple(p) for p in neighbors))


def load_adjacency(path, n: int) -> np.ndarray:
    """Read an n-by-n numeric grid; the diagonal must be exactly zero."""
    W = pd.read_csv(path, header=None).to_numpy(dtype=float)
    if W.shape != (n, n):
        raise ValidationError(f"adjacency matrix has shape {W.shape}, panel has n={n}")
    return W


def rolling_ar(p: Panel, spec: RollingSpec, iv: IvSpec,
               variant: str = "fe_jl") -> list[WindowPoint]:
    """Fixed-effects test on every window of ``spec.window`` consecutive periods.

    Windows where the test cannot run (instrument count reaching the
    effective sample size, non-positive variance, ...) are reported as
    skipped with the reason instead of failing the whole scan.
    """
    validate_panel(p)
    if spec.window > p.T:
        raise ValidationError(f"window {spec.window} exceeds T = {p.T}")
    Y = p.y.reshape(p.T, p.n)
    X = p.X.reshape(p.T, p.n, p.L)
    points: list[WindowPoint] = []
    for start in range(1, p.T - spec.window + 2, spec.step):
        stop = start + spec.window - 1
        sub = Panel(
            y=Y[start - 1 : stop].reshape(-1),
            X=X[start - 1 : stop].reshape(-1, p.L),
            n=p.n,
            T=spec.window,
        )
        try:
            res = ar_fe(sub, spec=iv, variant=variant)
            points.append(
                WindowPoint(start=start, stop=stop, statistic=res.statistic,
                            p_chisq=res.p_chisq)
            )
        except NumericalError as exc:
            points.append(
                WindowPoint(start=start, stop=stop, statistic=None, p_chisq=None,
                            skipped=True, reason=str(exc))
            )
    return points


# --- report formatting -------------------------------------------------------

def _fmt(v) -> str:
    return "" if v is None else f"{v:.12g}"


def _report_payload(res: TestResult, level: float) -> dict:
    if res.p_chisq is not None:
        decision = decide_chisq(res.statistic, res.K, res.L, level)
        decided = decision.reject
        rule = "chi-square"
    else:
        decided = res.p_normal <= level
        rule = "normal"
    warnings_list = ["extreme leverage"] if res.leverage_warning else []
    return {
        "statistic": res.statistic,
        "k_star": res.K,
        "l": res.L,
        "lambda": res.lam,
        "phi_hat": res.phi_hat,
        "kappa_hat": res.kurtosis_hat,
        "p_normal": res.p_normal,
        "p_chisq": res.p_chisq,
        "decision": "reject" if decided else "fail to reject",
        "decision_rule": rule,
        "level": level,
        "variant": res.variant,
        "warnings": warnings_list,
    }


def _emit_report(payload: dict, as_json: bool, out=None) -> None:
    out = out if out is not None else sys.stdout
    if as_json:
        rounded = {
            k: (float(_fmt(v)) if isinstance(v, float) else v) for k, v in payload.items()
        }
        json.dump(rounded, out, indent=2)
        out.write("\n")
        return
    for key in ("variant", "statistic", "k_star", "l", "lambda", "phi_hat",
                "kappa_hat", "p_normal", "p_chisq", "level", "decision_rule", "decision"):
        value = payload[key]
        out.write(f"{key:>14}: {_fmt(value) if isinstance(value, float) else value}\n")
    for w in payload["warnings"]:
        out.write(f"       warning: {w}\n")


def _auto_iv(p: Panel, requested: str, err=None) -> IvSpec:
    err = err if err is not None else sys.stderr
    if requested in ("full", "summed"):
        return IvSpec(requested)
    # default rule: full unless it would push the instrument count past N*
    full_cols = p.L * p.n * (p.n - 1) + p.L
    n_star = (p.n - 1) * (p.T - 1)
    if full_cols < n_star:
        return IvSpec("full")
    err.write(
        f"note: full instruments would give {full_cols} columns >= N* = {n_star}; "
        "falling back to summed mode\n"
    )
    return IvSpec("summed")


# --- subcommands --------------------------------------------------------------

def _cmd_test(args) -> int:
    p = load_panel(args.data, time_numeric=args.time_numeric,
                   use_wins_produced=args.wins_produced)
    peers = (
        load_peer_structure(args.peers, p.unit_labels) if args.peers else None
    )
    iv = _auto_iv(p, args.iv)
    if args.no_fe:
        res = ar_no_fe(p, peers=peers, spec=iv)
    else:
        res = ar_fe(p, peers=peers, spec=iv, variant=_VARIANT_FLAG[args.variant])
    _emit_report(_report_payload(res, args.level), args.json)
    return 0


def _cmd_simulate(args) -> int:
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    cfg = McConfig(
        n=args.n, T=args.t, reps=args.reps, rho=args.rho, beta=args.beta,
        nd=args.nd, dgp=args.dgp, network=args.network.replace("-", "_"),
        m_true=args.m_true, misspec=args.misspec, misspec_m=args.misspec_m,
        level=args.level, seed=args.seed, variants=variants,
    )
    result = run_mc(cfg, n_jobs=args.jobs)
    rows = result_rows(result)
    fields = list(rows[0].keys())
    for row in rows[1:]:
        fields.extend(k for k in row if k not in fields)
    sink = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(sink, fieldnames=fields, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    finally:
        if args.out:
            sink.close()
    return 0


def _cmd_rolling(args) -> int:
    p = load_panel(args.data, time_numeric=args.time_numeric,
                   use_wins_produced=args.wins_produced)
    iv = _auto_iv(p, args.iv)
    points = rolling_ar(p, RollingSpec(window=args.window, step=args.step), iv,
                        variant=_VARIANT_FLAG[args.variant])
    if args.json:
        json.dump([point.__dict__ for point in points], sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 0
    writer = csv.writer(sys.stdout)
    writer.writerow(["start", "stop", "statistic", "p_chisq", "skipped", "reason"])
    for point in points:
        writer.writerow([
            point.start, point.stop, _fmt(point.statistic), _fmt(point.p_chisq),
            int(point.skipped), point.reason or "",
        ])
    return 0


def _cmd_tsls(args) -> int:
    p = load_panel(args.data, time_numeric=args.time_numeric,
                   use_wins_produced=args.wins_produced)
    W = load_adjacency(args.adjacency, p.n)
    res = tsls_peer_test(p, W)
    payload = {
        "rho_hat": res.rho_hat,
        "t_stat": res.t_stat,
        "p_value": res.p_value,
        "decision": "reject" if res.p_value <= args.level else "fail to reject",
        "level": args.level,
    }
    if args.json:
        json.dump({k: (float(_fmt(v)) if isinstance(v, float) else v)
                   for k, v in payload.items()}, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        for k, v in payload.items():
            sys.stdout.write(f"{k:>10}: {_fmt(v) if isinstance(v, float) else v}\n")
    return 0


def _add_panel_args(sub) -> None:
    sub.add_argument("data", help="long-format panel CSV")
    sub.add_argument("--time-numeric", action="store_true",
                     help="sort periods numerically instead of lexically")
    sub.add_argument("--wins-produced", action="store_true",
                     help="build the outcome from box-score columns")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peertest",
        description="Tests for the presence of peer effects in balanced panels "
                    "without specifying the network.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    t = subs.add_parser("test", help="one-shot peer-effect test on a CSV panel")
    _add_panel_args(t)
    t.add_argument("--no-fe", action="store_true",
                   help="jackknife test without fixed effects")
    t.add_argument("--fe", action="store_true",
                   help="two-way fixed-effects test (default)")
    t.add_argument("--iv", choices=["auto", "full", "summed"], default="auto")
    t.add_argument("--variant", choices=["jl", "din", "ag"], default="jl")
    t.add_argument("--level", type=float, default=0.05)
    t.add_argument("--peers", help="CSV of directed pairs (i, j): j is a potential peer of i")
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=_cmd_test)

    s = subs.add_parser("simulate", help="Monte Carlo rejection rates")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--t", type=int, required=True)
    s.add_argument("--reps", type=int, default=5000)
    s.add_argument("--rho", type=float, default=0.0)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--nd", type=float, default=0.0)
    s.add_argument("--dgp", choices=["normal", "lognormal"], default="normal")
    s.add_argument("--network",
                   choices=["none", "random-fixed", "random-uniform", "circular"],
                   default="none")
    s.add_argument("--m-true", type=int, default=1)
    s.add_argument("--misspec", choices=["indicator", "circle"], default=None)
    s.add_argument("--misspec-m", type=int, default=1)
    s.add_argument("--level", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--variants", default="jl",
                   help="comma-separated: jl, din, ag, tsls")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="write CSV here instead of stdout")
    s.set_defaults(func=_cmd_simulate)

    r = subs.add_parser("rolling", help="rolling-window p-values")
    _add_panel_args(r)
    r.add_argument("--window", type=int, default=50)
    r.add_argument("--step", type=int, default=1)
    r.add_argument("--iv", choices=["auto", "full", "summed"], default="auto")
    r.add_argument("--variant", choices=["jl", "din", "ag"], default="jl")
    r.add_argument("--json", action="store_true")
    r.set_defaults(func=_cmd_rolling)

    w = subs.add_parser("tsls", help="homogeneous peer-effect t-test under a given W")
    _add_panel_args(w)
    w.add_argument("--adjacency", required=True, help="n-by-n CSV grid, zero diagonal")
    w.add_argument("--level", type=float, default=0.05)
    w.add_argument("--json", action="store_true")
    w.set_defaults(func=_cmd_tsls)
    return parser


def run_cli(argv=None) -> int:
    """Parse arguments and dispatch; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except NumericalError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
