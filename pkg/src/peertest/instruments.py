"""Peer-characteristic instrument blocks and the pruned instrument matrix.

For each individual ``i`` the exogenous characteristics of its potential
peers serve as instruments for the peers' outcomes.  Per period, individual
``i``'s row carries one block of ``|N_i| * q`` columns holding ``X_jt @ B``
for each potential peer ``j``; all other rows of those columns are zero.
The full instrument matrix stacks the regressors first and then the peer
blocks (individual-major, then peer, then combination), pruned to a linearly
independent set by a greedy scan in that fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DegenerateX, DimensionMismatch, TooManyInstruments, UnbalancedPanel
from .panel import Panel

#: Relative residual-norm threshold below which a column counts as dependent.
RANK_TOL = 1e-8

IV_MODES = ("full", "summed", "custom")


@dataclass(frozen=True)
class PeerStructure:
    """Potential-peer sets: ``neighbors[i-1]`` lists individual i's peers (1-based)."""

    neighbors: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        n = len(self.neighbors)
        for i, peers in enumerate(self.neighbors, start=1):
            seen = set()
            for j in peers:
                if not 1 <= j <= n:
                    raise DimensionMismatch(f"peer {j} of individual {i} out of range 1..{n}")
                if j == i:
                    raise DimensionMismatch(f"individual {i} listed as its own peer")
                if j in seen:
                    raise DimensionMismatch(f"peer {j} of individual {i} listed twice")
                seen.add(j)

    @property
    def n(self) -> int:
        return len(self.neighbors)

    @property
    def counts(self) -> tuple[int, ...]:
        """Number of potential peers of each individual."""
        return tuple(len(p) for p in self.neighbors)

    def is_complete(self) -> bool:
        """True if every individual has all others as potential peers."""
        n = self.n
        return all(
            sorted(peers) == [j for j in range(1, n + 1) if j != i]
            for i, peers in enumerate(self.neighbors, start=1)
        )


def default_peer_structure(n: int) -> PeerStructure:
    """Complete potential peers: everyone except oneself."""
    if n < 2:
        raise UnbalancedPanel(f"need at least 2 individuals, got n={n}")
    return PeerStructure(
        tuple(tuple(j for j in range(1, n + 1) if j != i) for i in range(1, n + 1))
    )


@dataclass(frozen=True)
class IvSpec:
    """How peer characteristics map to instrument columns.

    ``mode`` is one of ``"full"`` (each characteristic separately, B = I_L),
    ``"summed"`` (one column per peer holding the row sum of characteristics,
    B = vector of ones), or ``"custom"`` (user-supplied L-by-q matrix ``B``
    of full column rank).
    """

    mode: str = "full"
    B: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in IV_MODES:
            raise DimensionMismatch(f"iv mode {self.mode!r} not one of {IV_MODES}")
        if self.mode == "custom":
            if self.B is None:
                raise DimensionMismatch("custom iv mode requires a combination matrix B")
            B = np.asarray(self.B, dtype=float)
            if B.ndim == 1:
                B = B[:, None]
            if B.shape[1] < 1 or np.linalg.matrix_rank(B) < B.shape[1]:
                raise DimensionMismatch("B must have full column rank")
            object.__setattr__(self, "B", B)
        elif self.B is not None:
            raise DimensionMismatch(f"B is only accepted in custom mode, not {self.mode!r}")

    def combination_matrix(self, L: int) -> np.ndarray:
        """The L-by-q matrix applied to each peer's characteristics."""
        if self.mode == "full":
            return np.eye(L)
        if self.mode == "summed":
            return np.ones((L, 1))
        if self.B.shape[0] != L:
            raise DimensionMismatch(f"B has {self.B.shape[0]} rows, panel has L={L} regressors")
        return self.B

    def q(self, L: int) -> int:
        return self.combination_matrix(L).shape[1]


@dataclass(frozen=True)
class ZMatrix:
    """Sparse peer-instrument block matrix with per-column provenance.

    ``origins[k] = ("z", i, j, c)``: column ``k`` lives in individual ``i``'s
    block and holds combination ``c`` of peer ``j``'s characteristics (all
    1-based).
    """

    matrix: sparse.csc_matrix
    origins: tuple[tuple, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass(frozen=True)
class InstrumentMatrix:
    """Linearly independent instrument columns selected from [X, Z].

    ``selected_columns[k]`` records where column ``k`` of ``Q`` came from:
    ``("x", l)`` for regressor column ``l`` or ``("z", i, j, c)`` as in
    :class:`ZMatrix` (``("z", k)`` when Z was passed as a bare array).
    """

    Q: np.ndarray
    K: int
    selected_columns: tuple[tuple, ...]


def build_Z(p: Panel, peers: PeerStructure, spec: IvSpec) -> ZMatrix:
    """Construct the sparse N-by-(sum_i n_i * q) peer-instrument matrix.

    Precondition: ``p`` validated and ``peers.n == p.n``.  Column order is
    individual-major, then peer in stored order, then combination index.
    """
    if peers.n != p.n:
        raise DimensionMismatch(f"peer structure for n={peers.n}, panel has n={p.n}")
    B = spec.combination_matrix(p.L)
    q = B.shape[1]
    n, T, N = p.n, p.T, p.n * p.T

    rows, cols, data, origins = [], [], [], []
    col = 0
    for i in range(1, n + 1):
        block_rows = (i - 1) + n * np.arange(T)  # rows of individual i, all periods
        for j in peers.neighbors[i - 1]:
            vals = p.X[(j - 1)::n, :] @ B  # T x q: peer j's combined characteristics
            for c in range(q):
                rows.append(block_rows)
                cols.append(np.full(T, col))
                data.append(vals[:, c])
                origins.append(("z", i, j, c + 1))
                col += 1
    if col == 0:
        matrix = sparse.csc_matrix((N, 0))
    else:
        matrix = sparse.csc_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(N, col),
        )
    return ZMatrix(matrix=matrix, origins=tuple(origins))


def assemble_Q(X, Z, tol: float = RANK_TOL, z_origins=None) -> InstrumentMatrix:
    """Greedy rank-revealing selection of linearly independent columns of [X, Z].

    Columns are scanned in order, X first; a column is kept iff its residual
    after projection on the already-selected columns exceeds ``tol`` times its
    own norm.  The scan order makes the selection (and the reported
    provenance) deterministic across platforms.

    Raises
    ------
    DegenerateX
        If an X column is numerically zero.
    TooManyInstruments
        If the selected count reaches the number of rows.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if isinstance(Z, ZMatrix):
        if z_origins is None:
            z_origins = Z.origins
        Zd = Z.matrix.toarray()
    elif sparse.issparse(Z):
        Zd = Z.toarray()
    else:
        Zd = np.asarray(Z, dtype=float)
        if Zd.ndim == 1:
            Zd = Zd[:, None]
    N = X.shape[0]
    if Zd.shape[0] != N:
        raise DimensionMismatch(f"X has {N} rows but Z has {Zd.shape[0]}")
    if z_origins is None:
        z_origins = tuple(("z", k + 1) for k in range(Zd.shape[1]))
    elif len(z_origins) != Zd.shape[1]:
        raise DimensionMismatch(f"{len(z_origins)} origins for {Zd.shape[1]} Z columns")

    basis = np.empty((N, min(N, X.shape[1] + Zd.shape[1])))
    k = 0
    kept_cols: list[np.ndarray] = []
    kept_origin: list[tuple] = []

    def consider(c: np.ndarray, origin: tuple, from_x: bool) -> None:
        nonlocal k
        nrm0 = np.linalg.norm(c)
        if nrm0 == 0.0:
            if from_x:
                raise DegenerateX(f"regressor column {origin[1]} is numerically zero")
            return
        v = c.astype(float, copy=True)
        for _ in range(2):  # second pass guards against cancellation
            if k:
                v -= basis[:, :k] @ (basis[:, :k].T @ v)
        nrm = np.linalg.norm(v)
        if nrm > tol * nrm0:
            basis[:, k] = v / nrm
            kept_cols.append(np.asarray(c, dtype=float))
            kept_origin.append(origin)
            k += 1

    for ell in range(X.shape[1]):
        consider(X[:, ell], ("x", ell + 1), from_x=True)
    for kz in range(Zd.shape[1]):
        consider(Zd[:, kz], tuple(z_origins[kz]), from_x=False)

    if k >= N:
        raise TooManyInstruments(f"selected K = {k} instruments with only N = {N} rows")
    return InstrumentMatrix(Q=np.column_stack(kept_cols), K=k, selected_columns=tuple(kept_origin))
