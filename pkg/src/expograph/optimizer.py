"""In-process simulation of decentralized momentum SGD on ``n`` logical nodes.

Iterates and momenta are stacked as ``n x d`` arrays, so one mixing round is
a single ``W @ X``.  Independent trials are simulated side by side in one
array, each with its own random streams.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from expograph import rng as _rng
from expograph.consensus import WeightSchedule, next_matrix
from expograph.synthdata import NodeDataset, full_gradient, per_sample_gradients

__all__ = [
    "Algorithm",
    "DivergenceError",
    "NodeState",
    "TrainConfig",
    "TrainTrace",
    "dmsgd_step",
    "vanilla_dmsgd_step",
    "step_size",
    "halving_schedule",
    "run_training",
    "estimate_transient_iterations",
]

log = logging.getLogger(__name__)


class Algorithm(str, enum.Enum):
    DMSGD = "dmsgd"
    VANILLA_DMSGD = "vanilla-dmsgd"
    DSGD = "dsgd"
    PARALLEL_MSGD = "parallel-msgd"

    @classmethod
    def parse(cls, value: str | Algorithm) -> Algorithm:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"vanilla": "vanilla-dmsgd", "parallel": "parallel-msgd", "pmsgd": "parallel-msgd"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            valid = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown algorithm {value!r}; expected one of {valid}") from None


class DivergenceError(FloatingPointError):
    """Non-finite iterate.  ``trial`` and ``k`` locate the failing step when known."""

    def __init__(self, k: int | None = None, trial: int | None = None):
        where = ", ".join(
            f"{name}={val}" for name, val in (("trial", trial), ("k", k)) if val is not None
        )
        super().__init__(f"iterates diverged ({where or 'location unknown'})")
        self.k = k
        self.trial = trial


@dataclass(frozen=True)
class NodeState:
    x: np.ndarray
    m: np.ndarray

    @classmethod
    def start(cls, x0: np.ndarray) -> NodeState:
        x0 = np.asarray(x0, dtype=np.float64)
        return cls(x0.copy(), np.zeros_like(x0))


def _check(state: NodeState) -> NodeState:
    if not (np.isfinite(state.x).all() and np.isfinite(state.m).all()):
        raise DivergenceError()
    return state


def _dmsgd(state: NodeState, W, grads, gamma: float, beta: float) -> NodeState:
    W = np.asarray(W, dtype=np.float64)
    return NodeState(W @ (state.x - gamma * state.m), W @ (beta * state.m + grads))


def _vanilla(state: NodeState, W, grads, gamma: float, beta: float) -> NodeState:
    W = np.asarray(W, dtype=np.float64)
    m_new = beta * state.m + grads
    return NodeState(W @ (state.x - gamma * m_new), m_new)


def dmsgd_step(state: NodeState, W, grads: np.ndarray, gamma: float, beta: float) -> NodeState:
    """``m' = W (beta m + g)``, ``x' = W (x - gamma m)`` with the *old* momentum in the x update."""
    return _check(_dmsgd(state, W, grads, gamma, beta))


def vanilla_dmsgd_step(state: NodeState, W, grads: np.ndarray, gamma: float, beta: float) -> NodeState:
    """Local heavy-ball momentum; only iterates are mixed: ``m' = beta m + g``, ``x' = W (x - gamma m')``."""
    return _check(_vanilla(state, W, grads, gamma, beta))


def halving_schedule(every: int, until: int) -> tuple[tuple[int, float], ...]:
    """Multiply the step size by 1/2 at ``every, 2*every, ...`` below ``until``."""
    return tuple((k, 0.5) for k in range(every, until, every))


def step_size(gamma: float, decay: tuple[tuple[int, float], ...], k: int) -> float:
    """Piecewise-constant step: ``gamma`` times every multiplier whose iteration is ``<= k``."""
    g = gamma
    for at, mult in decay:
        if k >= at:
            g *= mult
    return g


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of one simulated training run (averaged over ``trials``)."""

    n: int
    d: int
    gamma: float
    beta: float
    T: int
    schedule: WeightSchedule
    algorithm: Algorithm = Algorithm.DMSGD
    batch_size: int = 1
    seed: int = 0
    trials: int = 1
    decay: tuple[tuple[int, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        object.__setattr__(self, "decay", tuple((int(a), float(b)) for a, b in self.decay))
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if self.T < 1 or self.trials < 1 or self.batch_size < 1:
            raise ValueError("T, trials and batch_size must be >= 1")
        if self.schedule.n != self.n:
            raise ValueError(f"schedule has n={self.schedule.n}, config has n={self.n}")

    @property
    def effective_beta(self) -> float:
        return 0.0 if self.algorithm is Algorithm.DSGD else self.beta


@dataclass(frozen=True)
class TrainTrace:
    """Trial-averaged metrics after each iteration; ``k[j] = j + 1`` is the iterate index."""

    k: np.ndarray
    mse: np.ndarray
    grad_norm: np.ndarray
    consensus: np.ndarray
    label: str = field(default="", compare=False)

    def __len__(self) -> int:
        return len(self.k)

    def to_bytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                        for a in (self.mse, self.grad_norm, self.consensus))


def _simulate(cfg: TrainConfig, ds: NodeDataset) -> np.ndarray:
    """All trials side by side; returns a ``trials x 3 x T`` array of (mse, grad_norm, consensus).

    State is laid out ``n x (trials*d)`` so a mixing round is one matrix product.
    """
    if ds.x_star is None:
        raise ValueError("dataset has no reference solution; generate it with solve=True")
    n, d, R = cfg.n, cfg.d, cfg.trials
    x0 = np.stack([_rng.stream(cfg.seed, "init", t).standard_normal(d) for t in range(R)])
    samplers = [_rng.stream(cfg.seed, "grad", t) for t in range(R)]
    state = NodeState.start(np.tile(x0.reshape(1, R * d), (n, 1)))
    beta = cfg.effective_beta
    step = _vanilla if cfg.algorithm is Algorithm.VANILLA_DMSGD else _dmsgd
    averaging = np.full((n, n), 1.0 / n)
    rows = np.arange(n)[:, None, None]
    out = np.empty((R, 3, cfg.T))
    # divergence is detected explicitly below, so overflow warnings are noise
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(cfg.T):
            if cfg.algorithm is Algorithm.PARALLEL_MSGD:
                W = averaging
            else:
                W = next_matrix(cfg.schedule, k).entries
            idx = np.stack([s.integers(ds.M, size=(n, cfg.batch_size)) for s in samplers], axis=1)
            X = state.x.reshape(n, R, 1, d)
            g = per_sample_gradients(ds.features[rows, idx], ds.labels[rows, idx], X).mean(axis=2)
            state = step(state, W, g.reshape(n, R * d), step_size(cfg.gamma, cfg.decay, k), beta)
            X = state.x.reshape(n, R, d)
            finite = np.isfinite(X).all(axis=(0, 2)) & np.isfinite(state.m.reshape(n, R, d)).all(axis=(0, 2))
            if not finite.all():
                raise DivergenceError(k=k, trial=int(np.argmin(finite)))
            xbar = X.mean(axis=0)
            gbar = full_gradient(ds, xbar)
            out[:, 0, k] = np.mean(np.sum((X - ds.x_star) ** 2, axis=2), axis=0)
            out[:, 1, k] = np.sum(gbar * gbar, axis=1)
            out[:, 2, k] = np.sum((X - xbar) ** 2, axis=(0, 2))
    return out


def run_training(cfg: TrainConfig, ds: NodeDataset, label: str = "") -> TrainTrace:
    """Run ``cfg.trials`` independent trials and average their metrics.

    Trial ``t`` draws its start point from ``(seed, "init", t)`` and its
    minibatches from ``(seed, "grad", t)``.

    Raises:
        DivergenceError: Carrying the first ``(trial, k)`` that produced a non-finite iterate.
    """
    if ds.n != cfg.n or ds.d != cfg.d:
        raise ValueError(f"dataset is {ds.n} x {ds.d}, config expects {cfg.n} x {cfg.d}")
    mean = _simulate(cfg, ds).mean(axis=0)
    log.debug("finished %s: final mse %.3e", label or cfg.algorithm.value, mean[0, -1])
    return TrainTrace(np.arange(1, cfg.T + 1), mean[0], mean[1], mean[2], label)


def estimate_transient_iterations(dec: TrainTrace, par: TrainTrace, delta: float = 0.1) -> int:
    """Smallest ``K`` with ``dec.mse[k] <= (1 + delta) * par.mse[k]`` for every ``k >= K``.

    Returns ``len(dec)`` when the last entry already violates the bound.
    """
    if len(dec) != len(par):
        raise ValueError("traces must have equal length")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    bad = np.flatnonzero(dec.mse > (1.0 + delta) * par.mse)
    return 0 if bad.size == 0 else int(bad[-1]) + 1
