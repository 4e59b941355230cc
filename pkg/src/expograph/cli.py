"""Command-line entry point: ``expograph {spectrum,consensus,train,table,recipe}``.

Options come from three layers, later ones winning: built-in defaults, an
optional ``--config`` JSON file with the same keys as the long flags
(``samples_per_node`` for ``--samples-per-node``), and explicit flags.
Every command writes its outputs atomically and prints one summary line
with a hash of the resolved configuration.

Exit status: 0 on success, 2 for invalid flags or configuration, 1 when a
computation fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

from expograph import __version__
from expograph import experiments as ex
from expograph.optimizer import Algorithm, DivergenceError, halving_schedule
from expograph.output import config_hash, write_json, write_table
from expograph.recipes import RECIPE_NAMES, figure_recipes, run_recipe
from expograph.spectral import Regime
from expograph.synthdata import ConvergenceError, Heterogeneity, generate_logistic
from expograph.topology import Family, TopologyError

log = logging.getLogger("expograph")

THREADS_ENV = "EXPOGRAPH_THREADS"


class ConfigError(ValueError):
    """Invalid option value; ``field`` names the flag or config key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# ---- value parsers (accept flag strings and already-typed JSON values) ----

def _int(v: Any) -> int:
    if isinstance(v, bool):
        raise ValueError("expected an integer")
    if isinstance(v, int):
        return v
    try:
        return int(str(v), 0)
    except ValueError:
        raise ValueError(f"expected an integer, got {v!r}") from None


def _nonneg_int(v: Any) -> int:
    x = _int(v)
    if x < 0:
        raise ValueError(f"must be >= 0, got {x}")
    return x


def _pos_int(v: Any) -> int:
    x = _int(v)
    if x < 1:
        raise ValueError(f"must be >= 1, got {x}")
    return x


def _float(v: Any) -> float:
    if isinstance(v, bool):
        raise ValueError("expected a number")
    return float(v)


def _list(item: Callable[[Any], Any]) -> Callable[[Any], list]:
    def parse(v: Any) -> list:
        parts = v if isinstance(v, list) else [p for p in str(v).split(",") if p.strip()]
        if not parts:
            raise ValueError("empty list")
        return [item(p.strip() if isinstance(p, str) else p) for p in parts]

    return parse


def _n_range(v: Any) -> list[int]:
    """``a:b`` (inclusive) or ``a:b:step``; a JSON list of ints is also accepted."""
    if isinstance(v, list):
        return [_pos_int(x) for x in v]
    parts = str(v).split(":")
    if len(parts) not in (2, 3):
        raise ValueError(f"expected start:stop[:step], got {v!r}")
    a, b = _int(parts[0]), _int(parts[1])
    step = _int(parts[2]) if len(parts) == 3 else 1
    if step < 1 or a > b:
        raise ValueError(f"empty range {v!r}")
    return list(range(a, b + 1, step))


def _choice(values: Sequence[str]) -> Callable[[Any], str]:
    def parse(v: Any) -> str:
        s = str(v).strip().lower()
        if s not in values:
            raise ValueError(f"expected one of {', '.join(values)}, got {v!r}")
        return s

    return parse


def _family(v: Any) -> str:
    return Family.parse(v).value


def _enum(parse: Callable[[Any], Any]) -> Callable[[Any], str]:
    return lambda v: parse(v).value


def _bool(v: Any) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


@dataclass(frozen=True)
class Option:
    name: str
    parse: Callable[[Any], Any]
    default: Any
    help: str
    flag: bool = False  # store_true switch

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


COMMON = (
    Option("seed", _nonneg_int, 0, "experiment seed (unsigned 64-bit)"),
    Option("threads", _pos_int, None, f"worker threads (default: ${THREADS_ENV} or 1)"),
    Option("out", str, None, "output file (output directory for recipe)"),
    Option("format", _choice(("csv", "jsonl")), "csv", "table format: csv or jsonl"),
)

COMMANDS: dict[str, tuple[str, tuple[Option, ...]]] = {
    "spectrum": ("spectral gap and deviation norm per (n, family)", (
        Option("family", _list(_family), ["static-exp"], "comma-separated graph families"),
        Option("n", _pos_int, None, "single network size"),
        Option("n-range", _n_range, None, "sizes as start:stop[:step], stop inclusive"),
        Option("regime", _enum(Regime.parse), "homogeneous", "recorded in the summary only"),
    )),
    "consensus": ("consensus residue decay of a weight schedule", (
        Option("schedule", str, "one-peer-exp", "schedule kind or static graph family"),
        Option("n", _pos_int, 32, "network size"),
        Option("steps", _pos_int, 20, "mixing rounds"),
        Option("trials", _pos_int, 1, "independent start vectors / realizations"),
        Option("d", _pos_int, 10, "columns of the start matrix"),
    )),
    "train": ("simulate DmSGD on synthetic logistic regression", (
        Option("algorithm", _enum(Algorithm.parse), "dmsgd", "dmsgd, vanilla-dmsgd or dsgd"),
        Option("schedule", _list(str), ["parallel", "static-exp", "one-peer-exp", "grid", "ring"],
               "comma-separated topologies; 'parallel' adds the exact-averaging baseline"),
        Option("n", _pos_int, 16, "network size"),
        Option("d", _pos_int, 10, "model dimension"),
        Option("samples-per-node", _pos_int, 2000, "samples M held by each node"),
        Option("heterogeneity", _enum(Heterogeneity.parse), "non-iid", "iid or non-iid"),
        Option("gamma", _float, 0.2, "initial step size"),
        Option("beta", _float, 0.8, "momentum"),
        Option("halve-every", _nonneg_int, 1000, "halve the step size every this many iterations (0: never)"),
        Option("iters", _pos_int, 5000, "iterations T"),
        Option("batch-size", _pos_int, 1, "per-node minibatch size"),
        Option("trials", _pos_int, 20, "independent trials averaged per curve"),
        Option("delta", _float, 0.1, "tolerance of the transient-iteration estimator"),
    )),
    "table": ("per-iteration degree and transient bound per topology", (
        Option("n", _list(_pos_int), [16, 64, 256], "comma-separated network sizes"),
        Option("regime", _enum(Regime.parse), "homogeneous", "homogeneous or heterogeneous"),
        Option("family", _list(_family), None, "restrict to these families"),
    )),
    "recipe": ("regenerate the data and figure of a built-in recipe", (
        Option("name", _choice(RECIPE_NAMES + ("all",)), None, "recipe name or 'all'"),
        Option("fast", _bool, False, "downscaled variant where one exists", flag=True),
        Option("list", _bool, False, "list the recipes and exit", flag=True),
    )),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expograph", description="Exponential-graph experiments for decentralized SGD.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, (text, options) in COMMANDS.items():
        p = sub.add_parser(cmd, help=text, description=text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file of option values; flags override it")
        if cmd == "recipe":
            p.add_argument("name", nargs="?", help="recipe name or 'all'")
        for opt in COMMON + options:
            if opt.name == "name":
                continue
            if opt.flag:
                p.add_argument(f"--{opt.name}", action="store_true", help=opt.help)
            else:
                p.add_argument(f"--{opt.name}", metavar=opt.dest.upper(), help=opt.help)
    return parser


def resolve_options(command: str, flags: dict, file_values: dict | None = None) -> dict:
    """Merge defaults, config-file values and flags, validating every value.

    Raises:
        ConfigError: Naming the offending flag (``--gamma``) or config key
            (``config.gamma``).
    """
    options = {o.dest: o for o in COMMON + COMMANDS[command][1]}
    merged = {dest: (o.default, None) for dest, o in options.items()}
    for key, value in (file_values or {}).items():
        dest = key.replace("-", "_")
        if dest not in options:
            raise ConfigError(f"config.{key}", f"unknown option for '{command}'")
        merged[dest] = (value, f"config.{key}")
    for dest, value in flags.items():
        if dest in options:
            merged[dest] = (value, f"--{options[dest].name}" if dest != "name" else "name")
    out = {}
    for dest, (value, source) in merged.items():
        if source is None or value is None:
            out[dest] = value
            continue
        try:
            out[dest] = options[dest].parse(value)
        except (ValueError, TypeError) as e:
            raise ConfigError(source, str(e)) from None
    if out["threads"] is None:
        env = os.environ.get(THREADS_ENV)
        try:
            out["threads"] = _pos_int(env) if env else 1
        except ValueError as e:
            raise ConfigError(THREADS_ENV, str(e)) from None
    return out


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as e:
        raise ConfigError("--config", f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("--config", f"{path} is not valid JSON ({e.msg} at line {e.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError("--config", f"{path} must hold a JSON object")
    return data


# ---- commands ----
# Each returns (written paths, row count) and may raise ConfigError for
# combinations that only fail once the module objects are built.

def _out_path(opts: dict, stem: str) -> Path:
    return Path(opts["out"] or f"{stem}.{opts['format']}")


def _cmd_spectrum(opts: dict) -> tuple[list[Path], int]:
    if opts["n"] is not None and opts["n_range"] is not None:
        raise ConfigError("--n", "give either --n or --n-range, not both")
    ns = opts["n_range"] or ([opts["n"]] if opts["n"] is not None else None)
    if ns is None:
        raise ConfigError("--n", "one of --n or --n-range is required")
    try:
        table = ex.spectrum_table(opts["family"], ns, opts["threads"])
    except TopologyError as e:
        raise ConfigError("--n", str(e)) from None
    return [write_table(table, _out_path(opts, "spectrum"), opts["format"])], len(table)


def _cmd_consensus(opts: dict) -> tuple[list[Path], int]:
    try:
        ex.schedule_for(opts["schedule"], opts["n"], opts["seed"])
    except ValueError as e:
        raise ConfigError("--schedule", str(e)) from None
    table = ex.consensus_table(opts["schedule"], opts["n"], opts["steps"], opts["trials"], opts["seed"], opts["d"])
    return [write_table(table, _out_path(opts, "consensus"), opts["format"])], len(table)


def _cmd_train(opts: dict) -> tuple[list[Path], int]:
    n = opts["n"]
    if opts["algorithm"] == Algorithm.PARALLEL_MSGD.value:
        raise ConfigError("--algorithm", "use 'parallel' in --schedule for the parallel baseline")
    try:
        runs = [ex.resolve_run(name, n, opts["algorithm"], opts["seed"]) for name in opts["schedule"]]
    except ValueError as e:
        raise ConfigError("--schedule", str(e)) from None
    if not 0 <= opts["beta"] < 1:
        raise ConfigError("--beta", f"must lie in [0, 1), got {opts['beta']}")
    if not opts["gamma"] > 0:
        raise ConfigError("--gamma", f"must be positive, got {opts['gamma']}")
    if not opts["delta"] > 0:
        raise ConfigError("--delta", f"must be positive, got {opts['delta']}")
    if opts["batch_size"] > opts["samples_per_node"]:
        raise ConfigError("--batch-size", "cannot exceed --samples-per-node")
    T = opts["iters"]
    decay = halving_schedule(opts["halve_every"], T) if opts["halve_every"] else ()
    base = dict(n=n, d=opts["d"], gamma=opts["gamma"], beta=opts["beta"], T=T, batch_size=opts["batch_size"],
                seed=opts["seed"], trials=opts["trials"], decay=decay)
    ds = generate_logistic(n, opts["samples_per_node"], opts["d"], opts["heterogeneity"], seed=opts["seed"])
    table, summary = ex.train_table(runs, ds, base, opts["delta"], opts["threads"])
    data = write_table(table, _out_path(opts, "train"), opts["format"])
    meta = write_json({"columns": list(table.columns), "data": data.name, **summary}, data.with_suffix(".json"))
    return [data, meta], len(table)


def _cmd_table(opts: dict) -> tuple[list[Path], int]:
    try:
        table = ex.comparison_rows(opts["n"], opts["regime"], opts["family"], opts["seed"], opts["threads"])
    except (TopologyError, ValueError) as e:
        raise ConfigError("--n", str(e)) from None
    return [write_table(table, _out_path(opts, "table"), opts["format"])], len(table)


def _cmd_recipe(opts: dict) -> tuple[list[Path], int]:
    if opts["list"]:
        for r in figure_recipes():
            print(f"{r.name:6s} {r.description}")
        return [], 0
    if opts["name"] is None:
        raise ConfigError("name", "a recipe name (or 'all') is required")
    names = RECIPE_NAMES if opts["name"] == "all" else (opts["name"],)
    paths: list[Path] = []
    for name in names:
        res = run_recipe(name, opts["out"] or "results", opts["seed"], opts["fast"], opts["threads"], opts["format"])
        paths.extend(res.paths)
    return paths, len(names)


_HANDLERS = {
    "spectrum": _cmd_spectrum,
    "consensus": _cmd_consensus,
    "train": _cmd_train,
    "table": _cmd_table,
    "recipe": _cmd_recipe,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    logging.basicConfig(level=logging.WARNING - 10 * min(args.pop("verbose"), 2),
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        opts = resolve_options(command, args, _load_config(args.pop("config", None)))
        paths, count = _HANDLERS[command](opts)
    except ConfigError as e:
        print(f"expograph {command}: error: {e}", file=sys.stderr)
        return 2
    except (DivergenceError, ConvergenceError, TopologyError, ValueError) as e:
        module = type(e).__module__.rsplit(".", 1)[-1]
        print(f"expograph {command}: {module} error: {e}", file=sys.stderr)
        return 1
    if not (command == "recipe" and opts["list"]):
        # thread count never changes results, so it stays out of the hash
        identity = {"command": command, **{k: v for k, v in opts.items() if k != "threads"}}
        unit = "recipes" if command == "recipe" else "rows"
        written = ", ".join(str(p) for p in paths)
        print(f"{command}: {count} {unit} -> {written} [config {config_hash(identity)}]")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
