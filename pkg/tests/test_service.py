"""HTTP service: endpoints, validation mapping, execution error mapping."""

import json
import os

import pytest
from fastapi.testclient import TestClient

from tolfl.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def config_body(**overrides) -> dict:
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
        "seed": 5,
    }
    base.update(overrides)
    return base


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["version"]


def test_presets_listing(client):
    resp = client.get("/presets")
    assert resp.status_code == 200
    assert resp.json()["presets"] == ["clean", "client-fail", "server-fail"]


def test_run_endpoint_executes_and_writes(client, tmp_path):
    resp = client.post("/runs", json={"config": config_body(), "out_dir": str(tmp_path)})
    assert resp.status_code == 200
    body = resp.json()
    assert len(body["config_hash"]) == 12
    assert body["row"]["method"] == "tolfl"
    assert body["row"]["runs"] == 1
    assert 0.0 <= body["row"]["mean"] <= 1.0
    for path in body["trace_files"] + [body["summary_file"], body["provenance_file"]]:
        assert os.path.exists(path)


def test_run_endpoint_rejects_missing_k(client, tmp_path):
    cfg = config_body()
    del cfg["k"]
    resp = client.post("/runs", json={"config": cfg, "out_dir": str(tmp_path)})
    assert resp.status_code == 422
    assert "k" in json.dumps(resp.json())


def test_run_endpoint_rejects_unknown_key(client, tmp_path):
    cfg = config_body(momentum=0.9)
    resp = client.post("/runs", json={"config": cfg, "out_dir": str(tmp_path)})
    assert resp.status_code == 422
    assert "momentum" in json.dumps(resp.json())


def test_run_request_rejects_stray_fields(client, tmp_path):
    resp = client.post(
        "/runs", json={"config": config_body(), "out_dir": str(tmp_path), "verbose": True}
    )
    assert resp.status_code == 422


@pytest.mark.filterwarnings("ignore:overflow")
@pytest.mark.filterwarnings("ignore:invalid value")
def test_run_endpoint_reports_divergence(client, tmp_path):
    cfg = config_body(alpha=1e6, epochs=40)
    resp = client.post("/runs", json={"config": cfg, "out_dir": str(tmp_path)})
    assert resp.status_code == 400
    assert "diverged" in resp.json()["detail"]


def test_suite_endpoint(client, tmp_path):
    resp = client.post(
        "/suites",
        json={
            "preset": "clean",
            "N": 4,
            "k": 2,
            "epochs": 2,
            "repetitions": 1,
            "samples_per_class": 12,
            "out_dir": str(tmp_path),
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert [r["method"] for r in body["rows"]] == ["batch", "fl", "sbt", "tolfl"]
    assert os.path.exists(body["table_file"])

    report_resp = client.post("/reports", json={"trace_dir": str(tmp_path)})
    assert report_resp.status_code == 200
    assert len(report_resp.json()["rows"]) == 4


def test_suite_endpoint_rejects_unknown_preset(client, tmp_path):
    resp = client.post("/suites", json={"preset": "chaos", "out_dir": str(tmp_path)})
    assert resp.status_code == 422


def test_report_endpoint_rejects_missing_dir(client, tmp_path):
    resp = client.post("/reports", json={"trace_dir": str(tmp_path / "nope")})
    assert resp.status_code == 400
    assert "not a directory" in resp.json()["detail"]
