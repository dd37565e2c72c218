import csv

import pytest
import yaml

from vecsched.cli import main
from vecsched.domain import catalog_from_dict, serialize_catalog, default_paper_catalog


def test_catalog_prints_default(capsys):
    assert main(["catalog"]) == 0
    doc = yaml.safe_load(capsys.readouterr().out)
    cat = catalog_from_dict(doc)
    assert len(cat.workflows) == 4 and len(cat.vnodes) == 12


def test_catalog_n_vns(capsys):
    main(["catalog", "--n-vns", "6"])
    assert len(yaml.safe_load(capsys.readouterr().out)["vnodes"]) == 6


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--bogus"])
    assert exc.value.code == 2


def test_eval_needs_scheduler():
    with pytest.raises(SystemExit) as exc:
        main(["eval"])
    assert exc.value.code == 2


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("workflows: []\nvnodes: []\n")
    assert main(["catalog", "--config", str(cfg)]) == 2
    assert "config error" in capsys.readouterr().err


def test_rl_eval_without_checkpoint_exits_2(tmp_path):
    assert main(["eval", "--scheduler", "rl", "--out", str(tmp_path)]) == 2


def test_eval_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["eval", "--scheduler", "gr", "--steps", "80", "--seed", "3",
                     "--out", str(tmp_path / d)]) == 0
    for name in ("decisions.csv", "metrics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = list(csv.DictReader((tmp_path / "a" / "metrics.csv").open()))
    assert rows[0]["scheduler"] == "gr" and rows[0]["n_tasks"] == "80"


def test_eval_with_config_catalog(tmp_path):
    cfg = tmp_path / "c.yaml"
    doc = yaml.safe_load(serialize_catalog(default_paper_catalog(seed=0, n_vns=6)))
    doc["env"] = {"arrival_rate": 0.02}
    cfg.write_text(yaml.safe_dump(doc))
    assert main(["eval", "--config", str(cfg), "--scheduler", "gb", "--steps", "40",
                 "--out", str(tmp_path / "o")]) == 0
    row = next(csv.DictReader((tmp_path / "o" / "metrics.csv").open()))
    assert row["n_vns"] == "6" and float(row["arrival_rate"]) == 0.02


def test_train_then_eval_rl(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"train": {"hidden": [16]}, "env": {"horizon_tasks": 20}}))
    out = tmp_path / "t"
    assert main(["train", "--config", str(cfg), "--n-vns", "6", "--episodes", "3",
                 "--workers", "1", "--out", str(out)]) == 0
    assert (out / "rl.npz").exists() and (out / "train_log.csv").exists()
    assert main(["eval", "--scheduler", "rl", "--n-vns", "6", "--steps", "30",
                 "--checkpoint", str(out / "rl.npz"), "--out", str(tmp_path / "e")]) == 0
    # a 6-node checkpoint does not fit the 12-node catalog
    assert main(["eval", "--scheduler", "rl", "--checkpoint", str(out / "rl.npz"),
                 "--out", str(tmp_path / "e2")]) == 2


def test_sweep_command(tmp_path, capsys):
    assert main(["sweep", "--scheduler", "gb", "--lambda", "0.04", "--n-vns", "6", "--reps", "2",
                 "--steps", "30", "--out", str(tmp_path)]) == 0
    assert "gb" in capsys.readouterr().out
    assert len(list(csv.DictReader((tmp_path / "sweep.csv").open()))) == 2
