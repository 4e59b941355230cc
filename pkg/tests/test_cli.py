import csv
import json

import numpy as np
import pytest

from expograph import cli
from expograph.output import Table, config_hash, dumps_json, format_number


def run(args, capsys):
    code = cli.main([str(a) for a in args])
    return code, capsys.readouterr()


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_spectrum_one_row_per_n(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, cap = run(["spectrum", "--family", "static-exp", "--n-range", "4:64", "--out", out], capsys)
    assert code == 0
    rows = read_csv(out)
    assert [int(r["n"]) for r in rows] == list(range(4, 65))
    assert list(rows[0]) == ["n", "family", "rho", "gap", "predicted_gap", "deviation_norm"]
    assert "config " in cap.out and cap.out.count("\n") == 1


def test_spectrum_numbers_have_17_digits(tmp_path, capsys):
    out = tmp_path / "s.csv"
    run(["spectrum", "--n", "6", "--out", out], capsys)
    row = read_csv(out)[0]
    assert row["gap"] == format(0.5, ".17g")
    assert float(row["rho"]) == 0.5


def test_consensus_exact_row_at_tau(tmp_path, capsys):
    out = tmp_path / "c.csv"
    code, _ = run(["consensus", "--schedule", "cyclic", "--n", "32", "--steps", "20", "--out", out], capsys)
    assert code == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["trial", "k", "residue"]
    assert len(rows) == 20
    assert float(rows[4]["residue"]) <= 1e-12
    assert float(rows[3]["residue"]) > 1e-6


@pytest.mark.parametrize(
    "args, flag",
    [
        (["consensus", "--n", "abc"], "--n"),
        (["consensus", "--steps", "0"], "--steps"),
        (["spectrum", "--family", "mesh", "--n", "8"], "--family"),
        (["spectrum", "--n", "1"], "--n"),
        (["spectrum"], "--n"),
        (["train", "--beta", "1.5"], "--beta"),
        (["consensus", "--schedule", "random-match", "--n", "7"], "--schedule"),
        (["consensus", "--format", "xml"], "--format"),
        (["recipe", "fig99"], "name"),
    ],
)
def test_bad_values_exit_2_naming_the_flag(args, flag, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, cap = run(args, capsys)
    assert code == 2
    assert flag in cap.err


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["spectrum", "--bogus", "1"])
    assert info.value.code == 2
    assert "--bogus" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 8, "steps": 9, "schedule": "permutation", "seed": 3}))
    out = tmp_path / "c.csv"
    code, _ = run(["consensus", "--config", cfg, "--steps", "4", "--out", out], capsys)
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 4
    assert float(rows[2]["residue"]) <= 1e-12


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nodes": 3}))
    code, cap = run(["consensus", "--config", bad], capsys)
    assert code == 2 and "config.nodes" in cap.err
    bad.write_text(json.dumps({"n": "many"}))
    code, cap = run(["consensus", "--config", bad], capsys)
    assert code == 2 and "config.n" in cap.err
    bad.write_text("{not json")
    code, cap = run(["consensus", "--config", bad], capsys)
    assert code == 2 and "--config" in cap.err


def test_threads_env_fallback_and_identical_output(tmp_path, capsys, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(["table", "--n", "8,16", "--out", a, "--threads", "1"], capsys)
    monkeypatch.setenv(cli.THREADS_ENV, "4")
    run(["table", "--n", "8,16", "--out", b], capsys)
    assert a.read_bytes() == b.read_bytes()
    monkeypatch.setenv(cli.THREADS_ENV, "zero")
    code, cap = run(["table", "--n", "8", "--out", b], capsys)
    assert code == 2 and cli.THREADS_ENV in cap.err


def test_table_jsonl(tmp_path, capsys):
    out = tmp_path / "t.jsonl"
    code, _ = run(["table", "--n", "64", "--regime", "heterogeneous", "--format", "jsonl", "--out", out], capsys)
    assert code == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    by = {r["family"]: r for r in rows}
    assert by["random-match"]["transient_bound"] is None
    assert by["static-exp"]["per_iter_degree"] == 6


def test_train_small_run(tmp_path, capsys):
    out = tmp_path / "train.csv"
    args = ["train", "--n", "4", "--samples-per-node", "50", "--d", "3", "--iters", "30", "--trials", "2",
            "--schedule", "parallel,static-exp,ring", "--out", out]
    code, _ = run(args, capsys)
    assert code == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["topology", "k", "mse", "grad_norm", "consensus"]
    assert len(rows) == 90
    assert [r["topology"] for r in rows[::30]] == ["parallel", "ring", "static-exp"]
    summary = json.loads(out.with_suffix(".json").read_text())
    assert set(summary["transient_iterations"]) == {"ring", "static-exp"}
    first = out.read_bytes()
    run(args, capsys)
    assert out.read_bytes() == first


def test_train_divergence_exits_1(tmp_path, capsys):
    args = ["train", "--n", "4", "--samples-per-node", "20", "--d", "2", "--iters", "20", "--trials", "1",
            "--gamma", "1e308", "--halve-every", "0", "--schedule", "ring", "--out", tmp_path / "t.csv"]
    code, cap = run(args, capsys)
    assert code == 1
    assert "optimizer" in cap.err
    assert not (tmp_path / "t.csv").exists()


def test_recipe_list(capsys):
    code, cap = run(["recipe", "--list"], capsys)
    assert code == 0
    assert [line.split()[0] for line in cap.out.splitlines()] == ["fig3", "fig4", "fig7", "fig8", "fig9", "fig10"]


def test_recipe_writes_data_sidecar_and_png(tmp_path, capsys):
    code, _ = run(["recipe", "fig9", "--out", tmp_path], capsys)
    assert code == 0
    meta = json.loads((tmp_path / "fig9.json").read_text())
    assert meta["columns"] == ["n", "k", "norm", "norm_sq"]
    assert meta["figure"]["series"] == ["n = 4", "n = 8", "n = 16", "n = 32"]
    assert (tmp_path / "fig9.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_output_helpers():
    assert format_number(0.1) == "0.10000000000000001"
    assert format_number(np.int64(3)) == "3"
    assert dumps_json({"b": float("nan"), "a": [1, 0.5]}) == '{"a": [1, 0.5], "b": null}'
    assert config_hash({"x": 1}) == config_hash({"x": 1}) != config_hash({"x": 2})
    with pytest.raises(ValueError):
        Table(("a", "b"), ((1,),))
