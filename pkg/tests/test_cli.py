"""CLI: in-process execution, env var output dir, HTTP client mode."""

import glob
import json
import os

import httpx
import pytest

import tolfl.cli as cli
from tolfl.service.app import create_app


def write_config(path, **overrides):
    base = {
        "protocol": "tolfl",
        "N": 4,
        "k": 2,
        "epochs": 2,
        "arch": {"hidden": [6], "code": 3, "dropout": 0.2},
        "dataset": {
            "synthetic": {
                "feature_dim": 8,
                "num_classes": 3,
                "samples_per_class": 20,
                "class_mean_separation": 4.0,
            }
        },
        "repetitions": 1,
        "seed": 3,
    }
    base.update(overrides)
    path.write_text(json.dumps(base))
    return path


def test_run_in_process(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "auroc" in stdout
    assert "summary:" in stdout
    assert glob.glob(str(out / "run_*_rep00.jsonl"))
    assert glob.glob(str(out / "summary_*.csv"))


def test_run_rejects_bad_config(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", k=None)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 2
    assert "k" in capsys.readouterr().err


def test_run_missing_config_file(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "nope.json")]) == 2
    assert "cannot read config" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore:overflow")
@pytest.mark.filterwarnings("ignore:invalid value")
def test_run_divergence_exits_one(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", alpha=1e6, epochs=40)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 1
    assert "diverged" in capsys.readouterr().err


def test_env_var_sets_default_out_dir(tmp_path, monkeypatch, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    target = tmp_path / "env-out"
    monkeypatch.setenv("TOLFL_OUT_DIR", str(target))
    monkeypatch.chdir(tmp_path)
    assert cli.main(["run", str(cfg)]) == 0
    capsys.readouterr()
    assert glob.glob(str(target / "run_*_rep00.jsonl"))


def test_suite_then_report_in_process(tmp_path, capsys):
    out = tmp_path / "out"
    rc = cli.main(
        [
            "suite",
            "clean",
            "--N",
            "4",
            "--k",
            "2",
            "--epochs",
            "2",
            "--reps",
            "1",
            "--samples-per-class",
            "12",
            "--out",
            str(out),
        ]
    )
    assert rc == 0
    stdout = capsys.readouterr().out
    assert stdout.count("auroc") == 4
    assert glob.glob(str(out / "suite_clean_*.csv"))

    assert cli.main(["report", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert stdout.count("auroc") == 4
    assert (out / "report.csv").exists()


def test_report_missing_dir_exits_one(tmp_path, capsys):
    assert cli.main(["report", str(tmp_path / "nope")]) == 1
    assert "not a directory" in capsys.readouterr().err


@pytest.fixture()
def http_backed_cli(monkeypatch):
    from fastapi.testclient import TestClient

    app = create_app()

    def fake_client(server: str) -> httpx.Client:
        return TestClient(app)  # httpx.Client subclass speaking to the app

    monkeypatch.setattr(cli, "_make_client", fake_client)


def test_run_via_server(http_backed_cli, tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    out = tmp_path / "out"
    rc = cli.main(["run", str(cfg), "--server", "http://svc", "--out", str(out)])
    assert rc == 0
    assert "auroc" in capsys.readouterr().out
    assert glob.glob(str(out / "run_*_rep00.jsonl"))


def test_server_error_surfaces(http_backed_cli, tmp_path, capsys):
    rc = cli.main(["report", str(tmp_path / "nope"), "--server", "http://svc"])
    assert rc == 1
    assert "server returned 400" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2
    capsys.readouterr()
