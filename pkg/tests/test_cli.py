import csv
import json

import pytest

from ratioproto.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_SELF_CHECK,
    format_table1,
    main,
    table1_check,
    table1_values,
)

SMALL = {
    "seed": 3,
    "dataset": {"synthetic": {"n_classes": 12, "dim": 6, "points_per_class": 20}},
    "protocol": {"n_way": 3, "k_shot": 1, "n_query": 5, "episodes": 300, "val_episodes": 5},
    "hidden": [8, 4],
    "evaluate": {"split": "test", "n_episodes": 20},
}


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_reproduce_toy_table(capsys):
    assert main(["reproduce-table1"]) == 0
    first = capsys.readouterr().out
    assert "0.95257" in first and "0.22314" in first
    assert main(["reproduce-table1"]) == 0
    assert capsys.readouterr().out == first


def test_toy_table_self_check_detects_mismatch():
    rows = table1_values()
    assert table1_check(rows) == []
    rows["a"]["L_S"] *= 1.01
    assert table1_check(rows)
    assert "L_S" in format_table1(rows)


def test_train_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", write_config(tmp_path, SMALL), "--out", str(out)]) == 0
    for name in ("trainlog.csv", "trainlog.npz", "model.bin", "model.json", "config.json", "manifest_train.json"):
        assert (out / name).exists(), name
    with (out / "trainlog.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == 300 // 100
    manifest = json.loads((out / "manifest_train.json").read_text())
    assert manifest["config"]["seed"] == 3 and "trainlog.csv" in manifest["outputs"]


def test_train_deterministic(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    main(["train", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["train", "--config", cfg, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a/trainlog.csv").read_bytes() == (tmp_path / "b/trainlog.csv").read_bytes()
    assert (tmp_path / "a/model.bin").read_bytes() == (tmp_path / "b/model.bin").read_bytes()


def test_seed_flag_overrides(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    main(["train", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "9"])
    assert json.loads((tmp_path / "a/config.json").read_text())["seed"] == 9


def test_evaluate_and_diagnose(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL)
    sm = write_config(tmp_path, {**SMALL, "head": {"kind": "SoftmaxSq"}}, "sm.json")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "dr")]) == 0
    assert main(["train", "--config", sm, "--out", str(tmp_path / "sm")]) == 0
    assert main(["evaluate", "--config", cfg, "--out", str(tmp_path / "dr")]) == 0
    result = json.loads((tmp_path / "dr/evaluation.json").read_text())
    assert 0 <= result["accuracy"] <= 1 and result["n_episodes"] == 20

    assert main(["diagnose", str(tmp_path / "dr"), str(tmp_path / "dr"), "--out", str(tmp_path / "self")]) == 0
    with (tmp_path / "self/comparison.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["measure"] for r in rows] == ["norm_ratio", "con_alpha", "div_alpha", "con_div"]
    assert all(float(r["mw_p"]) == 1.0 for r in rows)
    assert all(r["fisher_p"] in ("", "1.0") for r in rows)

    assert main(["diagnose", str(tmp_path / "dr"), str(tmp_path / "sm"), "--out", str(tmp_path / "pair")]) == 0
    assert (tmp_path / "pair/comparison.csv").exists()


def test_gen_data(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "dataset.csv").read_text().splitlines()
    assert len(lines) == 1 + 12 * 20


def test_surface_default(tmp_path):
    assert main(["surface", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "extrema.json").read_text())
    argmax = report["red"]["argmax"]
    assert abs(argmax[2] - 1) < 1e-3
    for name in ("red", "green", "blue"):
        assert (tmp_path / f"surface_{name}.csv").exists() and (tmp_path / f"surface_{name}.pgm").exists()


def test_surface_plane_deterministic(tmp_path):
    cfg = write_config(tmp_path, {"domain": "plane", "head": {"kind": "DR"}, "resolution": 41})
    main(["surface", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["surface", "--config", cfg, "--out", str(tmp_path / "b")])
    for f in ("surface_red.csv", "surface_red.pgm", "extrema.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    report = json.loads((tmp_path / "a/extrema.json").read_text())
    assert report["red"]["argmax"] == pytest.approx([0.0, 1.0], abs=1e-3)


@pytest.mark.parametrize(
    "cfg",
    [
        {"protocol": {"n_way": 1}},
        {"protocol": {"shots": 1}},
        {"head": {"kind": "Nope"}},
        {"mode": "cosine"},
        {"dataset": {"synthetic": {"n_classes": 2}}},
        {"protocol": {"n_way": 30}},
    ],
)
def test_config_errors(tmp_path, cfg):
    assert main(["train", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["train", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_surface_config_error(tmp_path):
    cfg = write_config(tmp_path, {"domain": "torus"})
    assert main(["surface", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_missing_files(tmp_path):
    assert main(["train", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_IO
    assert main(["diagnose", str(tmp_path / "x"), str(tmp_path / "y"), "--out", str(tmp_path)]) == EXIT_IO


def test_exit_code_constants():
    assert (EXIT_SELF_CHECK, EXIT_CONFIG, EXIT_IO) == (1, 2, 4)
