"""Graph families and their doubly-stochastic weight matrices.

All matrices are dense ``float64`` arrays.  Entry ``(i, j)`` scales what node
``i`` receives from node ``j``, so row ``i`` lists the in-neighbours of ``i``
and column ``j`` the out-neighbours of ``j``.

Grid and torus nodes are numbered row-major over ``(rows, cols)``; the star
hub is node 0; hypercube neighbours differ in exactly one bit.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from expograph import rng as _rng

__all__ = [
    "Family",
    "TopologySpec",
    "WeightMatrix",
    "TopologyError",
    "InvalidSizeError",
    "ConnectivityError",
    "ceil_log2",
    "circulant_from_row",
    "build_static_exponential",
    "build_one_peer_exponential",
    "one_peer_from_exponent",
    "metropolis_weights",
    "ring_adjacency",
    "star_adjacency",
    "grid_adjacency",
    "torus_adjacency",
    "hypercube_adjacency",
    "half_random_weights",
    "random_match_weights",
    "build_family",
    "static_matrix",
    "is_connected",
    "validate_doubly_stochastic",
    "max_out_degree",
    "square_factors",
    "write_matrix_csv",
    "read_matrix_csv",
]


class TopologyError(ValueError):
    """Base class for invalid topology requests."""


class InvalidSizeError(TopologyError):
    """Node count or shape parameters do not fit the family."""


class ConnectivityError(TopologyError):
    """The requested graph is disconnected."""


class Family(str, enum.Enum):
    RING = "ring"
    STAR = "star"
    GRID2D = "grid"
    TORUS2D = "torus"
    HALF_RANDOM = "half-random"
    BIPARTITE_RANDOM_MATCH = "random-match"
    STATIC_EXPONENTIAL = "static-exp"
    ONE_PEER_EXPONENTIAL = "one-peer-exp"
    HYPERCUBE = "hypercube"
    FULLY_CONNECTED = "full"

    @classmethod
    def parse(cls, value: str | Family) -> Family:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "static-exponential": "static-exp",
            "exp": "static-exp",
            "one-peer": "one-peer-exp",
            "one-peer-exponential": "one-peer-exp",
            "grid2d": "grid",
            "torus2d": "torus",
            "match": "random-match",
            "bipartite-random-match": "random-match",
            "fully-connected": "full",
            "complete": "full",
        }
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown family {value!r}; expected one of {valid}") from None


RANDOM_FAMILIES = frozenset({Family.HALF_RANDOM, Family.BIPARTITE_RANDOM_MATCH})


def ceil_log2(n: int) -> int:
    """Exact ``ceil(log2(n))`` for ``n >= 1``."""
    if n < 1:
        raise InvalidSizeError(f"ceil_log2 requires n >= 1, got {n}")
    return (n - 1).bit_length()


def square_factors(n: int) -> tuple[int, int]:
    """Most nearly square ``(rows, cols)`` with ``rows * cols == n`` and ``rows <= cols``."""
    rows = math.isqrt(n)
    while n % rows:
        rows -= 1
    return rows, n // rows


@dataclass(frozen=True)
class TopologySpec:
    """Declarative description of one graph instance.

    ``rows``/``cols`` apply to grid and torus only; when both are omitted the
    most nearly square factorisation of ``n`` is used.  ``seed`` only matters
    for the random families.
    """

    kind: Family
    n: int
    rows: int | None = None
    cols: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Family.parse(self.kind))
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise InvalidSizeError(f"{self.kind.value}: n must be an integer >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.kind in (Family.GRID2D, Family.TORUS2D):
            if self.rows is None and self.cols is None:
                rows, cols = square_factors(self.n)
                object.__setattr__(self, "rows", rows)
                object.__setattr__(self, "cols", cols)
            elif self.rows is None or self.cols is None or self.rows * self.cols != self.n:
                raise InvalidSizeError(
                    f"{self.kind.value}: rows*cols must equal n={self.n}, got rows={self.rows}, cols={self.cols}"
                )
        elif self.rows is not None or self.cols is not None:
            raise InvalidSizeError(f"{self.kind.value}: rows/cols only apply to grid and torus")
        if self.kind is Family.HYPERCUBE and self.n & (self.n - 1):
            raise InvalidSizeError(f"hypercube requires n to be a power of 2, got {self.n}")
        if self.kind is Family.BIPARTITE_RANDOM_MATCH and self.n % 2:
            raise InvalidSizeError(f"random-match requires even n, got {self.n}")


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Dense square mixing matrix.

    The array is copied and frozen on construction.  No stochasticity check is
    made here; see :func:`validate_doubly_stochastic`.
    """

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.entries, dtype=np.float64, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InvalidSizeError(f"weight matrix must be square and non-empty, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def directed(self) -> bool:
        return not np.array_equal(self.entries, self.entries.T)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    __hash__ = None  # type: ignore[assignment]


def _as_array(W: WeightMatrix | np.ndarray) -> np.ndarray:
    return W.entries if isinstance(W, WeightMatrix) else np.asarray(W, dtype=np.float64)


def circulant_from_row(c: np.ndarray) -> np.ndarray:
    """Matrix with ``W[i, j] = c[(j - i) mod n]``."""
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return c[idx]


def build_static_exponential(n: int) -> WeightMatrix:
    """Static exponential graph: every node hears from nodes ``2^0, 2^1, ...`` hops behind it.

    Each row has ``ceil(log2 n) + 1`` equal weights (self included).
    """
    if n < 2:
        raise InvalidSizeError(f"static exponential graph requires n >= 2, got {n}")
    tau = ceil_log2(n)
    c = np.zeros(n)
    c[0] = 1.0
    for e in range(tau):
        c[1 << e] = 1.0
    c /= tau + 1
    return WeightMatrix(circulant_from_row(c))


def one_peer_from_exponent(n: int, exponent: int) -> WeightMatrix:
    """One-peer matrix whose single off-diagonal hop is ``2**exponent``."""
    if n < 2:
        raise InvalidSizeError(f"one-peer exponential graph requires n >= 2, got {n}")
    hop = 1 << exponent
    if hop >= n:
        raise InvalidSizeError(f"hop 2**{exponent} does not fit n={n}")
    c = np.zeros(n)
    c[0] = 0.5
    c[hop] = 0.5
    return WeightMatrix(circulant_from_row(c))


def build_one_peer_exponential(n: int, k: int) -> WeightMatrix:
    """One-peer exponential matrix at iteration ``k`` (hop ``2**(k mod tau)``)."""
    if n < 2:
        raise InvalidSizeError(f"one-peer exponential graph requires n >= 2, got {n}")
    if k < 0:
        raise ValueError(f"iteration index must be >= 0, got {k}")
    return one_peer_from_exponent(n, k % ceil_log2(n))


def is_connected(adjacency: np.ndarray) -> bool:
    """Whether the undirected graph given by a boolean adjacency is connected."""
    a = np.asarray(adjacency, dtype=bool)
    n = a.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = seen.copy()
    while frontier.any():
        nxt = a[frontier].any(axis=0) & ~seen
        seen |= nxt
        frontier = nxt
    return bool(seen.all())


def metropolis_weights(adjacency: np.ndarray) -> WeightMatrix:
    """Metropolis weights ``1 / (1 + max(deg_i, deg_j))`` on each edge, slack on the diagonal.

    Args:
        adjacency: Symmetric boolean ``n x n`` array with zero diagonal.

    Raises:
        TopologyError: If the adjacency is not symmetric or has self-loops.
        ConnectivityError: If the graph is disconnected.
    """
    a = np.asarray(adjacency, dtype=bool)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise TopologyError(f"adjacency must be square, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise TopologyError("adjacency must be symmetric")
    if a.diagonal().any():
        raise TopologyError("adjacency must not contain self-loops")
    if not is_connected(a):
        raise ConnectivityError("graph is disconnected; its spectral gap would be 0")
    deg = a.sum(axis=1)
    w = np.where(a, 1.0 / (1.0 + np.maximum(deg[:, None], deg[None, :])), 0.0)
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return WeightMatrix(w)


def ring_adjacency(n: int) -> np.ndarray:
    a = np.zeros((n, n), dtype=bool)
    i = np.arange(n)
    a[i, (i + 1) % n] = True
    a[(i + 1) % n, i] = True
    np.fill_diagonal(a, False)
    return a


def star_adjacency(n: int) -> np.ndarray:
    a = np.zeros((n, n), dtype=bool)
    a[0, 1:] = True
    a[1:, 0] = True
    return a


def _lattice_adjacency(rows: int, cols: int, wrap: bool) -> np.ndarray:
    n = rows * cols
    a = np.zeros((n, n), dtype=bool)
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            for dr, dc in ((1, 0), (0, 1)):
                rr, cc = r + dr, c + dc
                if wrap:
                    rr, cc = rr % rows, cc % cols
                elif rr >= rows or cc >= cols:
                    continue
                v = rr * cols + cc
                if v != u:
                    a[u, v] = a[v, u] = True
    return a


def grid_adjacency(rows: int, cols: int) -> np.ndarray:
    return _lattice_adjacency(rows, cols, wrap=False)


def torus_adjacency(rows: int, cols: int) -> np.ndarray:
    return _lattice_adjacency(rows, cols, wrap=True)


def hypercube_adjacency(n: int) -> np.ndarray:
    if n < 2 or n & (n - 1):
        raise InvalidSizeError(f"hypercube requires n = 2**tau with tau >= 1, got {n}")
    i = np.arange(n)
    diff = i[:, None] ^ i[None, :]
    return (diff != 0) & ((diff & (diff - 1)) == 0)


def half_random_weights(n: int, rng: np.random.Generator, max_retries: int = 64) -> WeightMatrix:
    """Max-degree weights on a G(n, 1/2) realisation.

    Off-diagonal ``A / d_max``; the diagonal takes ``1 - deg_i / d_max`` so the
    matrix stays doubly stochastic.  The node attaining ``d_max`` gets a zero
    diagonal.  Disconnected draws are discarded and redrawn.
    """
    for _ in range(max_retries):
        upper = np.triu(rng.random((n, n)) < 0.5, k=1)
        a = upper | upper.T
        if not is_connected(a):
            continue
        deg = a.sum(axis=1)
        d_max = deg.max()
        w = a / d_max
        np.fill_diagonal(w, 1.0 - deg / d_max)
        return WeightMatrix(w)
    raise ConnectivityError(f"no connected 1/2-random graph on {n} nodes after {max_retries} draws")


def random_match_weights(n: int, permutation: np.ndarray) -> WeightMatrix:
    """Pair node ``perm[2j]`` with ``perm[2j+1]``; each pair averages with weights 1/2."""
    perm = np.asarray(permutation)
    if n % 2 or sorted(perm.tolist()) != list(range(n)):
        raise InvalidSizeError(f"random match needs even n and a permutation of range({n})")
    w = np.zeros((n, n))
    a, b = perm[0::2], perm[1::2]
    w[a, a] = w[b, b] = w[a, b] = w[b, a] = 0.5
    return WeightMatrix(w)


def build_family(
    spec: TopologySpec, k: int = 0, rng: np.random.Generator | None = None
) -> WeightMatrix:
    """Weight matrix of ``spec`` at iteration ``k``.

    Deterministic families ignore ``k`` except the one-peer exponential graph.
    Random families draw from ``rng``; when it is omitted they use the stream
    ``(spec.seed, "topology", kind, k)``.
    """
    kind, n = spec.kind, spec.n
    if kind is Family.STATIC_EXPONENTIAL:
        return build_static_exponential(n)
    if kind is Family.ONE_PEER_EXPONENTIAL:
        return build_one_peer_exponential(n, k)
    if kind is Family.FULLY_CONNECTED:
        return WeightMatrix(np.full((n, n), 1.0 / n))
    if kind is Family.RING:
        return metropolis_weights(ring_adjacency(n))
    if kind is Family.STAR:
        return metropolis_weights(star_adjacency(n))
    if kind is Family.GRID2D:
        return metropolis_weights(grid_adjacency(spec.rows, spec.cols))
    if kind is Family.TORUS2D:
        return metropolis_weights(torus_adjacency(spec.rows, spec.cols))
    if kind is Family.HYPERCUBE:
        return metropolis_weights(hypercube_adjacency(n))
    if rng is None:
        rng = _rng.stream(spec.seed, "topology", kind.value, k)
    if kind is Family.HALF_RANDOM:
        return half_random_weights(n, rng)
    if kind is Family.BIPARTITE_RANDOM_MATCH:
        return random_match_weights(n, rng.permutation(n))
    raise TopologyError(f"unhandled family {kind}")  # pragma: no cover


@lru_cache(maxsize=256)
def static_matrix(spec: TopologySpec) -> WeightMatrix:
    """Cached iteration-0 matrix of ``spec`` (matrices are immutable)."""
    return build_family(spec, 0)


def validate_doubly_stochastic(W: WeightMatrix | np.ndarray, tol: float = 1e-12) -> bool:
    """True iff row and column sums are within ``tol`` of 1 and no entry is below ``-tol``."""
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    a = _as_array(W)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.isfinite(a).all():
        return False
    return bool(
        np.all(np.abs(a.sum(axis=1) - 1.0) <= tol)
        and np.all(np.abs(a.sum(axis=0) - 1.0) <= tol)
        and np.all(a >= -tol)
    )


def max_out_degree(W: WeightMatrix | np.ndarray) -> int:
    """Largest number of other nodes any node sends to (nonzeros per column, diagonal excluded)."""
    a = _as_array(W) != 0
    np.fill_diagonal(a, False)
    return int(a.sum(axis=0).max())


def write_matrix_csv(W: WeightMatrix | np.ndarray, path: str | os.PathLike) -> None:
    """Write ``n`` on the first line, then ``n`` comma-separated rows at 17 significant digits."""
    a = _as_array(W)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{a.shape[0]}\n")
        for row in a:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_matrix_csv(path: str | os.PathLike) -> WeightMatrix:
    with open(path, encoding="utf-8") as fh:
        n = int(fh.readline())
        a = np.loadtxt(fh, delimiter=",", ndmin=2)
    if a.shape != (n, n):
        raise ValueError(f"{path}: header says n={n}, body is {a.shape[0]} x {a.shape[1]}")
    return WeightMatrix(a)
