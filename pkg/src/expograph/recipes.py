"""Built-in figure recipes.

Every recipe writes three files into the output directory: the data table
(``<name>.csv`` or ``<name>.jsonl``), a JSON sidecar describing axes, series
and the resolved configuration, and a PNG rendering of the curves.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable


from expograph import experiments as ex
from expograph.optimizer import halving_schedule
from expograph.output import Table, atomic_write, config_hash, write_json, write_table
from expograph.plotting import FigureSpec, Series, render_png
from expograph.synthdata import generate_logistic

__all__ = ["Recipe", "RecipeResult", "figure_recipes", "get_recipe", "run_recipe", "RECIPE_NAMES"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Recipe:
    name: str
    description: str
    params: dict
    fast_params: dict = field(default_factory=dict)

    def resolve(self, seed: int = 0, fast: bool = False) -> dict:
        cfg = dict(self.params)
        if fast:
            cfg.update(self.fast_params)
        cfg["seed"] = int(seed)
        cfg["fast"] = bool(fast and self.fast_params)
        return cfg


@dataclass(frozen=True)
class RecipeResult:
    name: str
    paths: tuple[Path, ...]
    config: dict
    summary: dict
    seconds: float

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)


def figure_recipes() -> list[Recipe]:
    return [
        Recipe("fig3", "spectral gap against network size",
               dict(families=["ring", "grid", "static-exp"], n_min=4, n_max=290)),
        Recipe("fig4", "consensus residue decay for exponential and matching schedules",
               dict(n=32, schedules=["static-exp", "one-peer-exp", "random-match"], steps=30, trials=10, d=10)),
        Recipe("fig7", "one-peer residue decay when n is not a power of two",
               dict(ns=[6, 12, 24, 48], schedule="one-peer-exp", steps=40, trials=10, d=10)),
        Recipe("fig8", "one-peer residue decay under cyclic, permuted and uniform hop order",
               dict(n=32, schedules=["one-peer-exp", "permutation", "uniform"], steps=30, trials=10, d=10)),
        Recipe("fig9", "norm of centred one-peer products",
               dict(ns=[4, 8, 16, 32], K=12)),
        Recipe("fig10", "DmSGD convergence on synthetic logistic regression across topologies",
               dict(n=64, d=10, M=14000, heterogeneity="non-iid", T=5000, batch_size=1, trials=20,
                    gamma=0.2, beta=0.8, halve_every=1000, delta=0.1, algorithm="dmsgd",
                    topologies=["parallel", "static-exp", "one-peer-exp", "grid", "ring"]),
               fast_params=dict(n=16, M=2000)),
    ]


RECIPE_NAMES = tuple(r.name for r in figure_recipes())


def get_recipe(name: str) -> Recipe:
    for r in figure_recipes():
        if r.name == name:
            return r
    raise ValueError(f"unknown recipe {name!r}; expected one of {', '.join(RECIPE_NAMES)}")


def _mean_by(table: Table, key: str, x: str, y: str, trials: int) -> list[Series]:
    """Trial-mean curve per ``key`` value; rows are grouped trial-major, so reshape is exact."""
    out = []
    for label, (xs, ys) in ex.table_as_arrays(table, key, x, y).items():
        xs, ys = xs.reshape(trials, -1), ys.reshape(trials, -1)
        out.append(Series(label, xs[0], ys.mean(axis=0)))
    return out


def _fig3(cfg: dict, threads: int) -> tuple[Table, FigureSpec, dict]:
    table = ex.spectrum_table(cfg["families"], range(cfg["n_min"], cfg["n_max"] + 1), threads)
    series = [Series(f, xs, ys, ".") for f, (xs, ys) in ex.table_as_arrays(table, "family", "n", "gap").items()]
    xs, pred = ex.table_as_arrays(table, "family", "n", "predicted_gap")["static-exp"]
    series.append(Series("2/(1+ceil(log2 n))", xs, pred, "k--"))
    return table, FigureSpec("Spectral gap", "n", "1 - rho", tuple(series), logy=True), {}


def _residue_table(names_and_ns: list[tuple[str, int]], cfg: dict) -> Table:
    rows = []
    for name, n in names_and_ns:
        t = ex.consensus_table(name, n, cfg["steps"], cfg["trials"], cfg["seed"], cfg["d"])
        rows.extend((name, n) + r for r in t.rows)
    return Table.from_records(("schedule", "n") + ex.CONSENSUS_COLUMNS, rows)


def _residue_figure(table: Table, key: str, cfg: dict, title: str) -> FigureSpec:
    key_j = table.columns.index(key)
    series = []
    for value in dict.fromkeys(r[key_j] for r in table.rows):
        sub = Table(table.columns, tuple(r for r in table.rows if r[key_j] == value))
        (s,) = _mean_by(sub, key, "k", "residue", cfg["trials"])
        series.append(Series(f"n = {value}" if key == "n" else str(value), s.x, s.y))
    return FigureSpec(title, "iteration k", "consensus residue", tuple(series), logy=True,
                      extra={"aggregate": f"mean over {cfg['trials']} trials"})


def _fig4(cfg: dict, threads: int) -> tuple[Table, FigureSpec, dict]:
    table = _residue_table([(s, cfg["n"]) for s in cfg["schedules"]], cfg)
    return table, _residue_figure(table, "schedule", cfg, f"Residue decay, n = {cfg['n']}"), {}


def _fig7(cfg: dict, threads: int) -> tuple[Table, FigureSpec, dict]:
    table = _residue_table([(cfg["schedule"], n) for n in cfg["ns"]], cfg)
    return table, _residue_figure(table, "n", cfg, "One-peer residue, n not a power of 2"), {}


def _fig8(cfg: dict, threads: int) -> tuple[Table, FigureSpec, dict]:
    table = _residue_table([(s, cfg["n"]) for s in cfg["schedules"]], cfg)
    return table, _residue_figure(table, "schedule", cfg, f"Hop order, n = {cfg['n']}"), {}


def _fig9(cfg: dict, threads: int) -> tuple[Table, FigureSpec, dict]:
    table = ex.rho_max_table(cfg["ns"], cfg["K"])
    series = tuple(
        Series(f"n = {n}", xs, ys, "o-")
        for n, (xs, ys) in ex.table_as_arrays(table, "n", "k", "norm_sq").items()
    )
    return table, FigureSpec("Centred product norm", "k", "squared 2-norm", series), {}


def _fig10(cfg: dict, threads: int) -> tuple[Table, FigureSpec, dict]:
    n, seed = cfg["n"], cfg["seed"]
    ds = generate_logistic(n, cfg["M"], cfg["d"], cfg["heterogeneity"], seed=seed)
    runs = [ex.resolve_run(name, n, cfg["algorithm"], seed) for name in cfg["topologies"]]
    base = dict(n=n, d=cfg["d"], gamma=cfg["gamma"], beta=cfg["beta"], T=cfg["T"],
                batch_size=cfg["batch_size"], seed=seed, trials=cfg["trials"],
                decay=halving_schedule(cfg["halve_every"], cfg["T"]))
    table, summary = ex.train_table(runs, ds, base, cfg["delta"], threads)
    curves = ex.table_as_arrays(table, "topology", "k", "mse")
    series = tuple(Series(r.label, *curves[r.label]) for r in runs)
    fig = FigureSpec(f"DmSGD, n = {n}", "iteration", "mean-square error", series, logy=True)
    return table, fig, summary


_BUILDERS: dict[str, Callable[[dict, int], tuple[Table, FigureSpec, dict]]] = {
    "fig3": _fig3, "fig4": _fig4, "fig7": _fig7, "fig8": _fig8, "fig9": _fig9, "fig10": _fig10,
}


def run_recipe(
    name: str,
    out_dir: str | Path,
    seed: int = 0,
    fast: bool = False,
    threads: int = 1,
    fmt: str = "csv",
) -> RecipeResult:
    """Regenerate one figure's data, sidecar and PNG under ``out_dir``."""
    recipe = get_recipe(name)
    cfg = recipe.resolve(seed, fast)
    t0 = time.perf_counter()
    table, fig, summary = _BUILDERS[name](cfg, threads)
    out = Path(out_dir)
    data = write_table(table, out / f"{name}.{fmt}", fmt)
    sidecar = {
        "recipe": name,
        "description": recipe.description,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "data": data.name,
        "columns": list(table.columns),
        "figure": fig.sidecar(),
        "summary": summary,
    }
    meta = write_json(sidecar, out / f"{name}.json")
    png = atomic_write(out / f"{name}.png", render_png(fig))
    seconds = time.perf_counter() - t0
    log.info("%s finished in %.1f s", name, seconds)
    return RecipeResult(name, (data, meta, png), cfg, summary, seconds)
