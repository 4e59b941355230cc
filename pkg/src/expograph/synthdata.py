"""Synthetic distributed logistic regression.

Node ``i`` holds ``M`` samples ``(h, y)`` with ``h ~ N(0, 10 I_d)`` and a label
drawn from a logistic model around a unit-norm generating vector.  The local
loss is ``mean(log(1 + exp(-y h^T x)))``.

Binary format (little-endian)::

    16 bytes   MAGIC
    int64 x6   n, M, d, heterogeneity (0 iid / 1 non-iid), replicate, has_x_star
    uint64     seed
    float64    features (n*M*d), labels (n*M), generators (n*d), [x_star (d)]
"""

from __future__ import annotations

import enum
import math
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from expograph import rng as _rng

__all__ = [
    "Heterogeneity",
    "NodeDataset",
    "ConvergenceError",
    "MAGIC",
    "generate_logistic",
    "local_loss",
    "loss",
    "per_sample_gradients",
    "local_full_gradient",
    "full_gradient",
    "node_gradients",
    "stochastic_gradient",
    "minibatch_gradients",
    "heterogeneity",
    "solve_reference",
    "save_dataset",
    "load_dataset",
]

MAGIC = b"EXPOGRAPH-DATA\x00\x01"
FEATURE_VARIANCE = 10.0


class Heterogeneity(str, enum.Enum):
    IID = "iid"
    NON_IID = "non-iid"

    @classmethod
    def parse(cls, value: str | Heterogeneity) -> Heterogeneity:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        if key in ("noniid", "non-iid", "hetero", "heterogeneous"):
            return cls.NON_IID
        if key in ("iid", "homo", "homogeneous"):
            return cls.IID
        raise ValueError(f"unknown heterogeneity {value!r}")


class ConvergenceError(RuntimeError):
    def __init__(self, iterations: int, grad_norm: float):
        super().__init__(
            f"reference solve stopped after {iterations} iterations with |grad f| = {grad_norm:.3e}"
        )
        self.iterations = iterations
        self.grad_norm = grad_norm


@dataclass(frozen=True, eq=False)
class NodeDataset:
    """Per-node samples plus the generating vectors and (optionally) the global minimiser."""

    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    generators: np.ndarray = field(repr=False)
    heterogeneity: Heterogeneity
    seed: int
    replicate: bool = False
    x_star: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        for name in ("features", "labels", "generators", "x_star"):
            a = getattr(self, name)
            if a is not None:
                a = np.array(a, dtype=np.float64, copy=True)
                a.setflags(write=False)
                object.__setattr__(self, name, a)
        if self.features.ndim != 3 or self.labels.shape != self.features.shape[:2]:
            raise ValueError("features must be n x M x d and labels n x M")
        if not np.all(np.abs(self.labels) == 1.0):
            raise ValueError("labels must be +1 or -1")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def M(self) -> int:
        return self.features.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[2]


def _log1p_exp(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form saturates instead of overflowing; absolute error stays at machine epsilon
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def generate_logistic(
    n: int,
    M: int,
    d: int,
    heterogeneity: Heterogeneity | str = Heterogeneity.NON_IID,
    seed: int = 0,
    replicate: bool = False,
    solve: bool = True,
) -> NodeDataset:
    """Draw a dataset and, unless ``solve=False``, attach its global minimiser.

    Args:
        heterogeneity: ``NON_IID`` gives every node its own generating vector;
            ``IID`` shares one.
        replicate: IID only.  Every node gets an identical copy of node 0's
            samples instead of independent draws (zero heterogeneity exactly).
    """
    if min(n, M, d) < 1:
        raise ValueError(f"n, M, d must all be >= 1, got {n}, {M}, {d}")
    heterogeneity = Heterogeneity.parse(heterogeneity)
    if replicate and heterogeneity is not Heterogeneity.IID:
        raise ValueError("replicate only applies to iid data")
    g = _rng.stream(seed, "data")
    rows = n if heterogeneity is Heterogeneity.NON_IID else 1
    gen = g.standard_normal((rows, d))
    gen /= np.linalg.norm(gen, axis=1, keepdims=True)
    gen = np.broadcast_to(gen, (n, d))
    draw_nodes = 1 if replicate else n
    h = g.normal(0.0, math.sqrt(FEATURE_VARIANCE), (draw_nodes, M, d))
    u = g.random((draw_nodes, M))
    logits = np.einsum("imd,id->im", h, gen[:draw_nodes])
    y = np.where(u <= _sigmoid(logits), 1.0, -1.0)
    if replicate:
        h = np.broadcast_to(h, (n, M, d))
        y = np.broadcast_to(y, (n, M))
    ds = NodeDataset(h, y, gen, heterogeneity, int(seed), replicate)
    if solve:
        ds = replace(ds, x_star=solve_reference(ds))
    return ds


def local_loss(ds: NodeDataset, i: int, x: np.ndarray) -> float:
    z = ds.labels[i] * (ds.features[i] @ x)
    return float(np.mean(_log1p_exp(-z)))


def _flat(ds: NodeDataset) -> tuple[np.ndarray, np.ndarray]:
    return ds.features.reshape(-1, ds.d), ds.labels.reshape(-1)


def loss(ds: NodeDataset, x: np.ndarray) -> float:
    """Global objective, the node average of the local losses."""
    h, y = _flat(ds)
    return float(np.mean(_log1p_exp(-y * (h @ x))))


def per_sample_gradients(h: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Rows ``-y h sigmoid(-y h^T x)`` for samples stacked along the leading axes."""
    z = y * np.einsum("...d,...d->...", h, x)
    return (-y * _sigmoid(-z))[..., None] * h


def local_full_gradient(ds: NodeDataset, i: int, x: np.ndarray) -> np.ndarray:
    return per_sample_gradients(ds.features[i], ds.labels[i], np.asarray(x)).mean(axis=0)


def node_gradients(ds: NodeDataset, X: np.ndarray) -> np.ndarray:
    """Full local gradient of every node at its own row of ``X`` (``n x d``)."""
    return per_sample_gradients(ds.features, ds.labels, np.asarray(X)[:, None, :]).mean(axis=1)


def full_gradient(ds: NodeDataset, x: np.ndarray) -> np.ndarray:
    """Gradient of the global loss.  ``x`` may also be ``k x d`` (one gradient per row)."""
    h, y = _flat(ds)
    x = np.asarray(x, dtype=np.float64)
    coef = -y[:, None] * _sigmoid(-y[:, None] * (h @ np.atleast_2d(x).T))
    g = (coef.T @ h) / h.shape[0]
    return g if x.ndim == 2 else g[0]


def stochastic_gradient(
    ds: NodeDataset, i: int, x: np.ndarray, batch_size: int, rng: np.random.Generator
) -> np.ndarray:
    """With-replacement minibatch gradient of node ``i``."""
    if not 1 <= batch_size <= ds.M:
        raise ValueError(f"batch_size must lie in [1, M={ds.M}], got {batch_size}")
    idx = rng.integers(ds.M, size=batch_size)
    return per_sample_gradients(ds.features[i, idx], ds.labels[i, idx], np.asarray(x)).mean(axis=0)


def minibatch_gradients(
    ds: NodeDataset, X: np.ndarray, batch_size: int, rng: np.random.Generator
) -> np.ndarray:
    """Minibatch gradients for all nodes at once; node ``i`` is evaluated at ``X[i]``.

    Indices are drawn as one ``n x batch_size`` block, independent across nodes.
    """
    if not 1 <= batch_size <= ds.M:
        raise ValueError(f"batch_size must lie in [1, M={ds.M}], got {batch_size}")
    idx = rng.integers(ds.M, size=(ds.n, batch_size))
    rows = np.arange(ds.n)[:, None]
    h = ds.features[rows, idx]
    y = ds.labels[rows, idx]
    return per_sample_gradients(h, y, np.asarray(X)[:, None, :]).mean(axis=1)


def heterogeneity(ds: NodeDataset, x: np.ndarray) -> float:
    """``(1/n) sum_i ||grad f_i(x) - grad f(x)||^2``."""
    g = node_gradients(ds, np.broadcast_to(x, (ds.n, ds.d)))
    return float(np.mean(np.sum((g - g.mean(axis=0)) ** 2, axis=1)))


def solve_reference(
    ds: NodeDataset,
    tol: float = 1e-10,
    max_iter: int = 1_000_000,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """Minimise the global loss by full-batch gradient descent with Armijo backtracking.

    The sufficient-decrease test carries a few ulps of slack on ``f`` so that
    steps are not rejected once the decrease falls below rounding error.

    Raises:
        ConvergenceError: If ``|grad f| > tol`` after ``max_iter`` iterations.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    x = np.zeros(ds.d) if x0 is None else np.array(x0, dtype=np.float64)
    f = loss(ds, x)
    g = full_gradient(ds, x)
    step = 1.0
    for it in range(max_iter):
        gn2 = float(g @ g)
        if math.sqrt(gn2) <= tol:
            return x
        slack = 8 * np.finfo(float).eps * max(abs(f), 1.0)
        while True:
            x_new = x - step * g
            f_new = loss(ds, x_new)
            if f_new <= f - 0.5 * step * gn2 + slack or step < 1e-12:
                break
            step *= 0.5
        x, f = x_new, f_new
        g = full_gradient(ds, x)
    raise ConvergenceError(max_iter, float(np.linalg.norm(g)))


_HEADER = struct.Struct("<6qQ")


def save_dataset(ds: NodeDataset, path: str | os.PathLike) -> None:
    """Write ``ds`` in the binary layout described in the module docstring."""
    hetero = 1 if ds.heterogeneity is Heterogeneity.NON_IID else 0
    has_star = ds.x_star is not None
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(ds.n, ds.M, ds.d, hetero, int(ds.replicate), int(has_star), ds.seed))
        for a in (ds.features, ds.labels, ds.generators) + ((ds.x_star,) if has_star else ()):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_dataset(path: str | os.PathLike) -> NodeDataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not an expograph dataset (bad magic)")
    off = len(MAGIC)
    n, M, d, hetero, replicate, has_star, seed = _HEADER.unpack_from(blob, off)
    off += _HEADER.size

    def take(count: int) -> np.ndarray:
        nonlocal off
        a = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
        off += 8 * count
        return a

    features = take(n * M * d).reshape(n, M, d)
    labels = take(n * M).reshape(n, M)
    generators = take(n * d).reshape(n, d)
    x_star = take(d) if has_star else None
    if off != len(blob):
        raise ValueError(f"{path}: {len(blob) - off} trailing bytes")
    return NodeDataset(
        features,
        labels,
        generators,
        Heterogeneity.NON_IID if hetero else Heterogeneity.IID,
        seed,
        bool(replicate),
        x_star,
    )
