"""Spectra of mixing matrices and the rate / transient-iteration bounds built on them.

``rho`` here is the second largest eigenvalue *magnitude* (the unit
eigenvalue removed), never the spectral radius.  All big-O bounds are
evaluated with every hidden constant set to 1, so their values are only
meaningful for orderings and growth shapes.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from expograph.topology import (
    Family,
    TopologySpec,
    WeightMatrix,
    build_family,
    build_one_peer_exponential,
    build_static_exponential,
    ceil_log2,
    circulant_from_row,
    max_out_degree,
)

__all__ = [
    "DisconnectedGraphError",
    "SpectrumReport",
    "Regime",
    "RateKind",
    "RateParams",
    "TableRow",
    "UNIT_TOL",
    "circulant_eigenvalues",
    "is_circulant",
    "dense_eigenvalues",
    "deviation_norm",
    "predicted_gap",
    "full_spectrum",
    "family_spectrum",
    "transient_bound",
    "rate_terms",
    "rate_bound",
    "comparison_table",
    "TABLE_FAMILIES",
]

UNIT_TOL = 1e-9
CIRCULANT_TOL = 1e-14


class DisconnectedGraphError(ValueError):
    """The unit eigenvalue is repeated, so the graph is not connected."""


class Regime(str, enum.Enum):
    HOMOGENEOUS = "homogeneous"
    HETEROGENEOUS = "heterogeneous"

    @classmethod
    def parse(cls, value: str | Regime) -> Regime:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for r in cls:
            if r.value.startswith(key[:4]):
                return r
        raise ValueError(f"unknown regime {value!r}; expected homogeneous or heterogeneous")


class RateKind(str, enum.Enum):
    DMSGD_STATIC = "dmsgd-static"
    STATIC_EXP = "static-exp"
    ONE_PEER = "one-peer"


@dataclass(frozen=True)
class SpectrumReport:
    n: int
    eigenvalues: np.ndarray = field(repr=False)
    rho: float
    gap: float
    deviation_norm: float
    predicted_gap: float | None = None
    method: str = "dense"


def circulant_eigenvalues(c: np.ndarray) -> np.ndarray:
    """Eigenvalues of the circulant matrix whose first row is ``c``.

    ``lambda_s = sum_m c[m] * exp(2*pi*1j*m*s/n)`` for ``s = 0..n-1``, in that
    order (the eigenvector for ``s`` is the Fourier mode ``exp(2*pi*1j*j*s/n)``).
    """
    c = np.asarray(c, dtype=np.complex128)
    n = c.shape[0]
    if n < 1:
        raise ValueError("generating vector must be non-empty")
    return np.fft.ifft(c) * n


def is_circulant(W: WeightMatrix | np.ndarray, tol: float = CIRCULANT_TOL) -> bool:
    a = np.asarray(W, dtype=np.float64)
    return bool(np.max(np.abs(a - circulant_from_row(a[0]))) <= tol)


def dense_eigenvalues(W: WeightMatrix | np.ndarray) -> np.ndarray:
    """All eigenvalues from LAPACK's general (Hessenberg QR) solver."""
    return np.linalg.eigvals(np.asarray(W, dtype=np.float64)).astype(np.complex128)


def deviation_norm(W: WeightMatrix | np.ndarray) -> float:
    """``||W - 11^T/n||_2`` as the root of the top eigenvalue of ``Ŵ^T Ŵ``."""
    a = np.asarray(W, dtype=np.float64)
    centered = a - 1.0 / a.shape[0]
    top = np.linalg.eigvalsh(centered.T @ centered)[-1]
    return math.sqrt(max(float(top), 0.0))


def predicted_gap(family: Family | str | None, n: int) -> float | None:
    """Closed-form spectral gap where one is known (exact for even n on the static graph)."""
    if family is None:
        return None
    family = Family.parse(family)
    if family is Family.STATIC_EXPONENTIAL:
        return 2.0 / (1 + ceil_log2(n))
    if family is Family.HYPERCUBE:
        return 2.0 / (1 + math.log2(n))
    if family is Family.FULLY_CONNECTED:
        return 1.0
    return None


def _second_magnitude(eigs: np.ndarray) -> float:
    dist = np.abs(eigs - 1.0)
    unit = int(np.argmin(dist))
    rest = np.delete(eigs, unit)
    if rest.size == 0:
        return 0.0
    if np.any(np.abs(rest - 1.0) <= UNIT_TOL):
        raise DisconnectedGraphError(
            "eigenvalue 1 has multiplicity > 1; the graph is disconnected"
        )
    return float(np.max(np.abs(rest)))


def full_spectrum(
    W: WeightMatrix | np.ndarray,
    family: Family | str | None = None,
    method: str = "auto",
) -> SpectrumReport:
    """Eigenvalues, ``rho``, gap and deviation norm of a doubly-stochastic matrix.

    Args:
        W: Connected doubly-stochastic matrix.
        family: Optional family tag used to fill ``predicted_gap``.
        method: ``"auto"`` uses the DFT for circulant inputs and the dense
            solver otherwise; ``"dense"`` and ``"circulant"`` force a path.

    Raises:
        DisconnectedGraphError: If more than one eigenvalue lies within 1e-9 of 1.
    """
    a = np.asarray(W, dtype=np.float64)
    n = a.shape[0]
    if method == "auto":
        method = "circulant" if is_circulant(a) else "dense"
    if method == "circulant":
        if not is_circulant(a):
            raise ValueError("matrix is not circulant")
        eigs = circulant_eigenvalues(a[0])
    elif method == "dense":
        eigs = dense_eigenvalues(a)
    else:
        raise ValueError(f"unknown method {method!r}")
    rho = _second_magnitude(eigs)
    return SpectrumReport(
        n=n,
        eigenvalues=eigs,
        rho=rho,
        gap=1.0 - rho,
        deviation_norm=deviation_norm(a),
        predicted_gap=predicted_gap(family, n),
        method=method,
    )


def family_spectrum(spec: TopologySpec) -> SpectrumReport:
    return full_spectrum(build_family(spec, 0), family=spec.kind)


def transient_bound(n: int, gap: float, regime: Regime | str = Regime.HOMOGENEOUS) -> float:
    """Transient iterations ``n^3 / gap^2`` (homogeneous) or ``n^3 / gap^4`` (heterogeneous)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not gap > 0:
        raise ValueError(f"spectral gap must be positive, got {gap}")
    if gap > 1:
        raise ValueError(f"spectral gap cannot exceed 1, got {gap}")
    power = 2 if Regime.parse(regime) is Regime.HOMOGENEOUS else 4
    return float(n) ** 3 / gap**power


@dataclass(frozen=True)
class RateParams:
    """Inputs of the three-term rate bounds. ``tau`` defaults to ``ceil(log2 n)``."""

    n: int
    T: int
    beta: float = 0.0
    sigma2: float = 1.0
    b2: float = 0.0
    rho: float = 0.0
    tau: int | None = None

    def __post_init__(self) -> None:
        if self.tau is None:
            object.__setattr__(self, "tau", ceil_log2(self.n))
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if min(self.n, self.sigma2, self.b2, self.tau) < 0:
            raise ValueError("rate parameters must be non-negative")


def rate_terms(p: RateParams, kind: RateKind | str) -> tuple[float, float, float]:
    """The three terms (linear-speedup, noise-consensus, heterogeneity) of a rate bound."""
    kind = RateKind(kind)
    n, T = p.n, p.T
    if kind is RateKind.DMSGD_STATIC:
        gap = 1.0 - p.rho
        return (
            p.sigma2 / math.sqrt(n * T),
            n * p.sigma2 / (T * gap),
            n * p.b2 / (T * gap**2),
        )
    log_term = math.log2(n) if kind is RateKind.STATIC_EXP else float(p.tau)
    one_minus_beta = 1.0 - p.beta
    return (
        p.sigma2 / math.sqrt(one_minus_beta * n * T),
        n * log_term * one_minus_beta * p.sigma2 / T,
        n * one_minus_beta * p.b2 * log_term**2 / T,
    )


def rate_bound(p: RateParams, kind: RateKind | str) -> float:
    return sum(rate_terms(p, kind))


@dataclass(frozen=True)
class TableRow:
    n: int
    family: str
    per_iter_degree: int
    gap: float
    transient_bound: float


TABLE_FAMILIES = (
    Family.RING,
    Family.STAR,
    Family.GRID2D,
    Family.TORUS2D,
    Family.HALF_RANDOM,
    Family.BIPARTITE_RANDOM_MATCH,
    Family.STATIC_EXPONENTIAL,
    Family.ONE_PEER_EXPONENTIAL,
)


def _table_row(n: int, family: Family, regime: Regime, seed: int) -> TableRow:
    if family is Family.BIPARTITE_RANDOM_MATCH:
        # gap of the time-varying match graph is unknown; bound reported as NaN
        W = build_family(TopologySpec(family, n, seed=seed), 0)
        return TableRow(n, family.value, max_out_degree(W), math.nan, math.nan)
    if family is Family.ONE_PEER_EXPONENTIAL:
        degree = max_out_degree(build_one_peer_exponential(n, 0))
        gap = full_spectrum(build_static_exponential(n)).gap
    else:
        W = build_family(TopologySpec(family, n, seed=seed), 0)
        degree = max_out_degree(W)
        gap = full_spectrum(W).gap
    return TableRow(n, family.value, degree, gap, transient_bound(n, gap, regime))


def comparison_table(
    ns: list[int],
    regime: Regime | str = Regime.HOMOGENEOUS,
    families: tuple[Family, ...] = TABLE_FAMILIES,
    seed: int = 0,
    threads: int = 1,
) -> list[TableRow]:
    """Per-iteration degree and transient bound from measured gaps for each (n, family).

    The one-peer graph borrows the static exponential gap because both share
    the same rate bound.  Rows are ordered by ``n`` then by ``families``.
    """
    regime = Regime.parse(regime)
    for n in ns:
        if n < 4:
            raise ValueError(f"comparison table needs n >= 4, got {n}")
    cells = [(n, Family.parse(f)) for n in ns for f in families]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda c: _table_row(c[0], c[1], regime, seed), cells))
    return [_table_row(n, f, regime, seed) for n, f in cells]
