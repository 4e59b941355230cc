"""Time-varying weight schedules, finite-time exact averaging and consensus residues.

Products are always accumulated newest-matrix-on-the-left,
``W(start+len-1) ... W(start+1) W(start)``.  One-peer circulants happen to
commute, but nothing here relies on it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from expograph import rng as _rng
from expograph.topology import (
    Family,
    TopologySpec,
    WeightMatrix,
    build_family,
    ceil_log2,
    one_peer_from_exponent,
    static_matrix,
)

__all__ = [
    "ScheduleKind",
    "WeightSchedule",
    "ResidueSeries",
    "TwoStepSearch",
    "EXACT_TOL",
    "next_matrix",
    "product",
    "product_exactness",
    "residue_decay",
    "min_exact_steps",
    "rho_max_series",
    "two_step_symmetric_search",
    "witness_index",
    "default_x0",
]

EXACT_TOL = 1e-12


class ScheduleKind(str, enum.Enum):
    STATIC = "static"
    CYCLIC_ONE_PEER = "cyclic"
    PERMUTATION_ONE_PEER = "permutation"
    UNIFORM_ONE_PEER = "uniform"
    BIPARTITE_MATCH_SEQUENCE = "random-match"

    @classmethod
    def parse(cls, value: str | ScheduleKind) -> ScheduleKind:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "one-peer": "cyclic",
            "one-peer-exp": "cyclic",
            "cyclic-one-peer": "cyclic",
            "perm": "permutation",
            "permutation-one-peer": "permutation",
            "uniform-one-peer": "uniform",
            "match": "random-match",
            "bipartite-match-sequence": "random-match",
        }
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown schedule {value!r}; expected one of {valid}") from None


_ONE_PEER_KINDS = frozenset(
    {ScheduleKind.CYCLIC_ONE_PEER, ScheduleKind.PERMUTATION_ONE_PEER, ScheduleKind.UNIFORM_ONE_PEER}
)


@dataclass(frozen=True)
class WeightSchedule:
    """Rule giving ``W(k)`` for every iteration ``k``.

    ``Static`` repeats the iteration-0 matrix of ``base_spec``.  The one-peer
    kinds use ``base_spec.n`` only.  Randomness is addressed by ``(seed, k)``
    so any iteration can be produced without replaying earlier ones.
    """

    kind: ScheduleKind
    base_spec: TopologySpec
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScheduleKind.parse(self.kind))
        if self.kind is ScheduleKind.BIPARTITE_MATCH_SEQUENCE and self.base_spec.n % 2:
            raise ValueError(f"random-match schedule requires even n, got {self.base_spec.n}")

    @classmethod
    def build(cls, kind: str | ScheduleKind, n: int, family: str | Family | None = None,
              seed: int = 0) -> WeightSchedule:
        """Convenience constructor; ``family`` is only used by ``static``."""
        kind = ScheduleKind.parse(kind)
        if kind is ScheduleKind.STATIC:
            spec = TopologySpec(Family.parse(family or Family.STATIC_EXPONENTIAL), n, seed=seed)
        elif kind is ScheduleKind.BIPARTITE_MATCH_SEQUENCE:
            spec = TopologySpec(Family.BIPARTITE_RANDOM_MATCH, n, seed=seed)
        else:
            spec = TopologySpec(Family.ONE_PEER_EXPONENTIAL, n)
        return cls(kind, spec, seed)

    @property
    def n(self) -> int:
        return self.base_spec.n

    @property
    def tau(self) -> int:
        return ceil_log2(self.n)

    def exponent(self, k: int) -> int:
        """Hop exponent used at iteration ``k`` by the one-peer kinds."""
        tau = self.tau
        if self.kind is ScheduleKind.CYCLIC_ONE_PEER:
            return k % tau
        if self.kind is ScheduleKind.PERMUTATION_ONE_PEER:
            order = _rng.stream(self.seed, "permutation", k // tau).permutation(tau)
            return int(order[k % tau])
        if self.kind is ScheduleKind.UNIFORM_ONE_PEER:
            return int(_rng.stream(self.seed, "uniform", k).integers(tau))
        raise ValueError(f"{self.kind.value} schedule has no hop exponent")

    @property
    def label(self) -> str:
        if self.kind is ScheduleKind.STATIC:
            return self.base_spec.kind.value
        if self.kind is ScheduleKind.CYCLIC_ONE_PEER:
            return Family.ONE_PEER_EXPONENTIAL.value
        return f"{self.kind.value}"


@lru_cache(maxsize=1024)
def _one_peer(n: int, exponent: int) -> WeightMatrix:
    return one_peer_from_exponent(n, exponent)


def next_matrix(schedule: WeightSchedule, k: int) -> WeightMatrix:
    """``W(k)`` of ``schedule``; a pure function of ``(schedule, k)``."""
    if k < 0:
        raise ValueError(f"iteration index must be >= 0, got {k}")
    if schedule.kind is ScheduleKind.STATIC:
        return static_matrix(schedule.base_spec)
    if schedule.kind in _ONE_PEER_KINDS:
        return _one_peer(schedule.n, schedule.exponent(k))
    return build_family(schedule.base_spec, k, _rng.stream(schedule.seed, "match", k))


def product(schedule: WeightSchedule, start: int, length: int) -> np.ndarray:
    """``W(start+length-1) ... W(start)``."""
    if length < 0:
        raise ValueError(f"length must be >= 0, got {length}")
    p = np.eye(schedule.n)
    for i in range(start, start + length):
        p = next_matrix(schedule, i).entries @ p
    return p


def product_exactness(schedule: WeightSchedule, start: int, length: int) -> float:
    """Max-abs entry of the windowed product minus ``11^T/n``."""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    return float(np.max(np.abs(product(schedule, start, length) - 1.0 / schedule.n)))


@dataclass(frozen=True)
class ResidueSeries:
    values: np.ndarray
    x0: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.x0.shape[1]


def default_x0(n: int, seed: int, trial: int = 0, d: int = 10) -> np.ndarray:
    """Standard-normal ``n x d`` start used by the residue experiments."""
    return _rng.stream(seed, "x0", trial).standard_normal((n, d))


def residue_decay(schedule: WeightSchedule, x0: np.ndarray, K: int) -> ResidueSeries:
    """``values[k] = ||(W(k)...W(0) - 11^T/n) x0||_F`` for ``k < K``.

    Only matrix-vector products are formed.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim == 1:
        x0 = x0[:, None]
    if x0.shape[0] != schedule.n:
        raise ValueError(f"x0 has {x0.shape[0]} rows, schedule has n={schedule.n}")
    if not np.isfinite(x0).all():
        raise ValueError("x0 must be finite")
    y = x0.copy()
    values = np.empty(K)
    for k in range(K):
        y = next_matrix(schedule, k).entries @ y
        values[k] = np.linalg.norm(y - y.mean(axis=0))
    return ResidueSeries(values=values, x0=x0)


def min_exact_steps(
    schedule: WeightSchedule, tol: float = EXACT_TOL, cap: int | None = None
) -> int | None:
    """Smallest prefix length whose product is within ``tol`` of ``11^T/n``; ``None`` past ``cap``.

    ``cap`` defaults to ``10 * tau``.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    cap = 10 * schedule.tau if cap is None else cap
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    p = np.eye(schedule.n)
    for length in range(1, cap + 1):
        p = next_matrix(schedule, length - 1).entries @ p
        if np.max(np.abs(p - 1.0 / schedule.n)) <= tol:
            return length
    return None


def witness_index(schedule: WeightSchedule, limit: int = 10_000) -> int:
    """Prefix length after which every one-peer hop has been used at least once."""
    seen: set[int] = set()
    for k in range(limit):
        seen.add(schedule.exponent(k))
        if len(seen) == schedule.tau:
            return k + 1
    raise RuntimeError(f"not all {schedule.tau} hops witnessed within {limit} iterations")


def rho_max_series(n: int, K: int) -> list[float]:
    """Spectral norms of centred cyclic one-peer products.

    Entry ``k`` is ``||Ŵ(k-1) ... Ŵ(0)||_2`` with ``Ŵ(i) = W(i) - 11^T/n``,
    for ``k = 0..K`` (entry 0 is the empty product, norm 1).
    """
    if n < 2 or K < 1:
        raise ValueError(f"need n >= 2 and K >= 1, got n={n}, K={K}")
    schedule = WeightSchedule.build(ScheduleKind.CYCLIC_ONE_PEER, n)
    p = np.eye(n)
    out = [1.0]
    for k in range(K):
        p = (next_matrix(schedule, k).entries - 1.0 / n) @ p
        top = np.linalg.eigvalsh(p.T @ p)[-1]
        out.append(math.sqrt(max(float(top), 0.0)))
    return out


@dataclass(frozen=True)
class TwoStepSearch:
    min_deviation: float
    argmin: tuple[float, float]
    discriminant: Fraction


def _three_node_pair(alpha: np.ndarray, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched 3-node one-peer matrices (hop 1 weight ``alpha``, hop 2 weight ``beta``)."""
    shape = alpha.shape
    w0 = np.zeros(shape + (3, 3))
    w1 = np.zeros(shape + (3, 3))
    for i in range(3):
        w0[..., i, i] = 1 - alpha
        w0[..., i, (i + 2) % 3] = alpha
        w1[..., i, i] = 1 - beta
        w1[..., i, (i + 1) % 3] = beta
    return w0, w1


def two_step_symmetric_search(n: int = 3, grid_steps: int = 1000) -> TwoStepSearch:
    """Grid search over the two-matrix 3-node family for the closest approach to exact averaging.

    ``alpha`` and ``beta`` each take ``grid_steps + 1`` evenly spaced values in
    ``[0, 1]``; the deviation is the max-abs entry of ``W1 W0 - 11^T/3``.  The
    returned discriminant of ``a^2 - a + 1/3`` is negative, so no real weights
    give an exact two-step average.
    """
    if n != 3:
        raise ValueError(f"two-step search is only defined for n = 3, got {n}")
    if grid_steps < 10:
        raise ValueError(f"grid_steps must be >= 10, got {grid_steps}")
    grid = np.linspace(0.0, 1.0, grid_steps + 1)
    best, best_ab = math.inf, (math.nan, math.nan)
    for a in grid:
        w0, w1 = _three_node_pair(np.full(grid.shape, a), grid)
        dev = np.abs(w1 @ w0 - 1.0 / 3.0).max(axis=(1, 2))
        j = int(np.argmin(dev))
        if dev[j] < best:
            best, best_ab = float(dev[j]), (float(a), float(grid[j]))
    discriminant = Fraction(1) - 4 * Fraction(1, 3)
    return TwoStepSearch(min_deviation=best, argmin=best_ab, discriminant=discriminant)
