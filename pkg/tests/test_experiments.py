"""Orchestration: artifact layout, determinism, suite presets, reporting."""

import json
import os

import pytest

from tolfl.config import ExperimentConfig, config_hash
from tolfl.data import SyntheticSpec, gen_synthetic, save_matrix_file
from tolfl.experiments import (
    ExperimentError,
    _client_fail_device,
    execute,
    report,
    run_suite,
    suite_configs,
)
from tolfl.trace import read_trace


def small_config(**overrides) -> ExperimentConfig:
    base = {
        "protocol": "tolfl",
        "N": 4,
        "k": 2,
        "epochs": 3,
        "arch": {"hidden": [6], "code": 3, "dropout": 0.2},
        "dataset": {
            "synthetic": {
                "feature_dim": 8,
                "num_classes": 3,
                "samples_per_class": 20,
                "class_mean_separation": 4.0,
            }
        },
        "repetitions": 2,
        "seed": 7,
    }
    base.update(overrides)
    return ExperimentConfig.model_validate(base)


@pytest.fixture(scope="module")
def clean_suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    result = run_suite(
        "clean",
        str(out),
        N=4,
        k=2,
        epochs=2,
        repetitions=2,
        samples_per_class=12,
        alpha=1e-3,
    )
    return result, out


def test_execute_writes_expected_artifacts(tmp_path):
    cfg = small_config()
    result = execute(cfg, str(tmp_path))
    chash = config_hash(cfg)
    assert result.config_hash == chash
    assert [os.path.basename(p) for p in result.trace_paths] == [
        f"run_{chash}_rep00.jsonl",
        f"run_{chash}_rep01.jsonl",
    ]
    for p in result.trace_paths:
        assert os.path.exists(p)
    assert os.path.basename(result.summary_path) == f"summary_{chash}.csv"
    assert os.path.basename(result.provenance_path) == f"provenance_{chash}.json"

    assert len(result.aurocs) == 2
    assert all(0.0 <= a <= 1.0 for a in result.aurocs)
    assert result.row.method == "tolfl"
    assert result.row.scenario == "clean"
    assert result.row.dataset == "synthetic"
    assert result.row.runs == 2

    lines = open(result.summary_path).read().splitlines()
    assert lines[0] == "# schema: tolfl.summary/1"
    assert "method,dataset,scenario,mean,std,runs" in lines
    assert lines[-1].startswith("tolfl,synthetic,clean,")

    prov = json.load(open(result.provenance_path))
    assert prov["schema"] == "tolfl.provenance/1"
    assert prov["rep_seeds"] == [7, 8]
    assert prov["config_hash"] == chash


def test_execute_reruns_are_byte_identical(tmp_path):
    cfg = small_config()
    a = tmp_path / "a"
    b = tmp_path / "b"
    execute(cfg, str(a))
    execute(cfg, str(b))
    names_a = sorted(os.listdir(a))
    assert names_a == sorted(os.listdir(b))
    for name in names_a:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_trace_summary_carries_evaluation(tmp_path):
    cfg = small_config(repetitions=1)
    result = execute(cfg, str(tmp_path))
    header, epochs, summary = read_trace(result.trace_paths[0])
    assert header["config_hash"] == result.config_hash
    assert len(epochs) == 3
    assert summary["method"] == "tolfl"
    assert summary["rep_seed"] == 7
    assert 0.0 <= summary["auroc_mean"] <= 1.0
    assert summary["auroc_per_group"]
    assert summary["final_train_loss"] > 0.0


@pytest.mark.filterwarnings("ignore:overflow")
@pytest.mark.filterwarnings("ignore:invalid value")
def test_divergent_run_writes_diagnostic(tmp_path):
    cfg = small_config(alpha=1e6, repetitions=1, epochs=40)
    with pytest.raises(ExperimentError, match="diverged"):
        execute(cfg, str(tmp_path))
    chash = config_hash(cfg)
    diag_path = tmp_path / f"diagnostic_{chash}_rep00.json"
    assert diag_path.exists()
    diag = json.loads(diag_path.read_text())
    assert diag["schema"] == "tolfl.diagnostic/1"
    assert diag["failed_epoch"] >= 1


def test_file_dataset_execution(tmp_path):
    ds = gen_synthetic(
        SyntheticSpec(
            feature_dim=5,
            num_classes=3,
            samples_per_class=15,
            class_mean_separation=4.0,
            noise_scale=1.0,
        ),
        seed=3,
    )
    path = tmp_path / "traffic.txt"
    save_matrix_file(ds, str(path))
    cfg = small_config(
        dataset={"file": str(path)},
        arch={"hidden": [4], "code": 2, "dropout": 0.0},
        anomaly_classes=[2],
        repetitions=1,
    )
    result = execute(cfg, str(tmp_path / "out"))
    assert result.row.dataset == "traffic.txt"
    assert 0.0 <= result.aurocs[0] <= 1.0


def test_suite_clean_table(clean_suite):
    result, out = clean_suite
    assert tuple(r.method for r in result.rows) == ("batch", "fl", "sbt", "tolfl")
    assert all(r.scenario == "clean" for r in result.rows)
    assert all(r.runs == 2 for r in result.rows)
    assert os.path.basename(result.table_path).startswith("suite_clean_")
    lines = open(result.table_path).read().splitlines()
    data = [l for l in lines if l and not l.startswith("#") and not l.startswith("method,")]
    assert len(data) == 4


def test_suite_configs_share_data_settings(clean_suite):
    result, _ = clean_suite
    configs = [r.config for r in result.results]
    assert [c.protocol for c in configs] == ["batch", "fl", "sbt", "tolfl"]
    assert [c.N for c in configs] == [1, 4, 4, 4]
    assert configs[3].k == 2
    assert len({c.seed for c in configs}) == 1
    assert len({c.epochs for c in configs}) == 1
    datasets = {json.dumps(c.dataset.model_dump(), sort_keys=True) for c in configs}
    assert len(datasets) == 1


def test_report_aggregates_suite(clean_suite):
    result, out = clean_suite
    rep = report(str(out))
    assert os.path.basename(rep.table_path) == "report.csv"
    assert rep.skipped == ()
    assert tuple(r.method for r in rep.rows) == ("batch", "fl", "sbt", "tolfl")
    for suite_row, report_row in zip(result.rows, rep.rows):
        assert report_row.mean == pytest.approx(suite_row.mean)
        assert report_row.std == pytest.approx(suite_row.std)
        assert report_row.runs == suite_row.runs


def test_report_skips_foreign_files(clean_suite, tmp_path):
    _, out = clean_suite
    junk = out / "junk.jsonl"
    junk.write_text('{"not": "a trace"}\n')
    try:
        rep = report(str(out))
        assert "junk.jsonl" in rep.skipped
        assert len(rep.rows) == 4
    finally:
        junk.unlink()
        report(str(out))  # restore deterministic report.csv


def test_report_requires_directory(tmp_path):
    with pytest.raises(ValueError, match="not a directory"):
        report(str(tmp_path / "missing"))


def test_server_fail_preset_hits_device_zero():
    for cfg in suite_configs("server-fail", N=4, k=2, epochs=10, repetitions=1):
        assert len(cfg.failures) == 1
        assert cfg.failures[0].device == 0
        assert cfg.failures[0].epoch == 5
        assert cfg.scenario == "server-fail"


def test_client_fail_preset_spares_heads():
    configs = suite_configs("client-fail", N=4, k=2, epochs=10, repetitions=1)
    by_protocol = {c.protocol: c for c in configs}
    assert by_protocol["batch"].failures == []
    assert by_protocol["fl"].failures[0].device == 3
    assert by_protocol["sbt"].failures[0].device == 3
    # heads are 0 and 2 for N=4, k=2, so the highest non-head is 3
    assert by_protocol["tolfl"].failures[0].device == 3


def test_client_fail_device_resolution():
    assert _client_fail_device("batch", 1, 1) is None
    assert _client_fail_device("fl", 6, 1) == 5
    assert _client_fail_device("sbt", 6, 6) == 5
    assert _client_fail_device("tolfl", 5, 2) == 4
    # every device its own head: nothing qualifies as a plain client
    assert _client_fail_device("tolfl", 4, 4) is None


def test_unknown_preset_rejected(tmp_path):
    with pytest.raises(ValueError, match="chaos"):
        suite_configs("chaos")
    with pytest.raises(ValueError, match="preset"):
        run_suite("chaos", str(tmp_path))
