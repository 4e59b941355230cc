"""Experiment drivers shared by the CLI subcommands and the figure recipes.

Each driver returns a :class:`~expograph.output.Table` whose rows are sorted by
its key columns, so files do not depend on execution order or thread count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from expograph import consensus as cs
from expograph import rng as _rng
from expograph import spectral as sp
from expograph.consensus import ScheduleKind, WeightSchedule
from expograph.optimizer import (
    Algorithm,
    TrainConfig,
    TrainTrace,
    estimate_transient_iterations,
    run_training,
)
from expograph.output import Table
from expograph.synthdata import NodeDataset
from expograph.topology import Family, TopologySpec

__all__ = [
    "SPECTRUM_COLUMNS",
    "CONSENSUS_COLUMNS",
    "TABLE_COLUMNS",
    "TRAIN_COLUMNS",
    "RHO_MAX_COLUMNS",
    "Run",
    "parallel_map",
    "spectrum_table",
    "comparison_rows",
    "schedule_for",
    "consensus_table",
    "rho_max_table",
    "resolve_run",
    "train_table",
]

log = logging.getLogger(__name__)

SPECTRUM_COLUMNS = ("n", "family", "rho", "gap", "predicted_gap", "deviation_norm")
CONSENSUS_COLUMNS = ("trial", "k", "residue")
TABLE_COLUMNS = ("n", "family", "per_iter_degree", "gap", "transient_bound")
TRAIN_COLUMNS = ("topology", "k", "mse", "grad_norm", "consensus")
RHO_MAX_COLUMNS = ("n", "k", "norm", "norm_sq")

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """``[fn(x) for x in items]``, optionally on a thread pool; result order is input order."""
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(min(threads, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _spectrum_row(cell: tuple[int, Family]) -> tuple:
    n, family = cell
    rep = sp.family_spectrum(TopologySpec(family, n))
    predicted = rep.predicted_gap if rep.predicted_gap is not None else float("nan")
    return (n, family.value, rep.rho, rep.gap, predicted, rep.deviation_norm)


def spectrum_table(families: Iterable[Family | str], ns: Iterable[int], threads: int = 1) -> Table:
    """One row per ``(n, family)``; ``predicted_gap`` is NaN where no closed form is known."""
    fams = [Family.parse(f) for f in families]
    cells = sorted({(n, f) for n in ns for f in fams}, key=lambda c: (c[0], c[1].value))
    return Table.from_records(SPECTRUM_COLUMNS, parallel_map(_spectrum_row, cells, threads))


def comparison_rows(ns: Sequence[int], regime: str, families: Sequence[Family | str] | None = None,
                    seed: int = 0, threads: int = 1) -> Table:
    fams = tuple(Family.parse(f) for f in families) if families else sp.TABLE_FAMILIES
    rows = sp.comparison_table(list(ns), regime, fams, seed=seed, threads=threads)
    return Table.from_records(
        TABLE_COLUMNS, ((r.n, r.family, r.per_iter_degree, r.gap, r.transient_bound) for r in rows)
    )


def schedule_for(name: str, n: int, seed: int = 0) -> WeightSchedule:
    """Schedule from a user-facing name: a schedule kind, or a graph family (used statically)."""
    try:
        kind = ScheduleKind.parse(name)
    except ValueError:
        return WeightSchedule.build(ScheduleKind.STATIC, n, Family.parse(name), seed)
    if kind is ScheduleKind.STATIC:
        return WeightSchedule.build(kind, n, Family.STATIC_EXPONENTIAL, seed)
    return WeightSchedule.build(kind, n, seed=seed)


def _trial_seed(seed: int, trial: int) -> int:
    return int(_rng.stream(seed, "schedule", trial).integers(2**63))


def consensus_table(
    name: str, n: int, steps: int, trials: int, seed: int = 0, d: int = 10
) -> Table:
    """Residue ``values[k]`` after ``k + 1`` mixing rounds, one block of rows per trial.

    Trial ``t`` starts from ``default_x0(n, seed, t, d)``; random schedules get
    an independent realization per trial.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rows = []
    for t in range(trials):
        schedule = schedule_for(name, n, _trial_seed(seed, t))
        series = cs.residue_decay(schedule, cs.default_x0(n, seed, t, d), steps)
        rows.extend((t, k, float(v)) for k, v in enumerate(series.values))
    return Table.from_records(CONSENSUS_COLUMNS, rows)


def rho_max_table(ns: Iterable[int], K: int) -> Table:
    rows = []
    for n in sorted(ns):
        for k, v in enumerate(cs.rho_max_series(n, K)):
            rows.append((n, k, v, v * v))
    return Table.from_records(RHO_MAX_COLUMNS, rows)


@dataclass(frozen=True)
class Run:
    """One curve of a training comparison."""

    label: str
    schedule: WeightSchedule
    algorithm: Algorithm


PARALLEL_LABEL = "parallel"


def resolve_run(name: str, n: int, algorithm: Algorithm | str, seed: int = 0) -> Run:
    """``parallel`` maps to parallel momentum SGD; anything else is a schedule name."""
    if name.strip().lower() in (PARALLEL_LABEL, "parallel-msgd", "pmsgd"):
        return Run(PARALLEL_LABEL, schedule_for("full", n), Algorithm.PARALLEL_MSGD)
    schedule = schedule_for(name, n, seed)
    return Run(schedule.label, schedule, Algorithm.parse(algorithm))


def train_table(
    runs: Sequence[Run],
    ds: NodeDataset,
    base: dict,
    delta: float = 0.1,
    threads: int = 1,
) -> tuple[Table, dict]:
    """Train every run on ``ds`` and estimate transient iterations against the parallel run.

    Args:
        base: ``TrainConfig`` keyword arguments shared by all runs (everything
            except ``schedule`` and ``algorithm``).

    Returns:
        The per-iteration table and a summary with ``transient_iterations``
        (absent when no parallel run is present) and ``final_mse`` per label.
    """
    labels = [r.label for r in runs]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate topologies in {labels}")

    def one(run: Run) -> TrainTrace:
        cfg = TrainConfig(schedule=run.schedule, algorithm=run.algorithm, **base)
        log.info("training %s", run.label)
        return run_training(cfg, ds, label=run.label)

    traces = dict(zip(labels, parallel_map(one, list(runs), threads)))
    rows = []
    for label in sorted(traces):
        tr = traces[label]
        rows.extend(zip([label] * len(tr), tr.k.tolist(), tr.mse, tr.grad_norm, tr.consensus))
    summary: dict = {"final_mse": {k: float(v.mse[-1]) for k, v in traces.items()}}
    par = traces.get(PARALLEL_LABEL)
    if par is not None:
        summary["transient_iterations"] = {
            k: estimate_transient_iterations(v, par, delta) for k, v in traces.items() if k != PARALLEL_LABEL
        }
        summary["delta"] = delta
    return Table.from_records(TRAIN_COLUMNS, rows), summary


def table_as_arrays(table: Table, key: str, x: str, y: str) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Group ``(x, y)`` columns by the value of ``key`` (first-appearance order)."""
    out: dict[str, tuple[list, list]] = {}
    ki, xi, yi = (table.columns.index(c) for c in (key, x, y))
    for row in table.rows:
        xs, ys = out.setdefault(str(row[ki]), ([], []))
        xs.append(row[xi])
        ys.append(row[yi])
    return {k: (np.asarray(a, dtype=float), np.asarray(b, dtype=float)) for k, (a, b) in out.items()}
