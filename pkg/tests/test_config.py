"""Config schema: defaults, validation messages, round-trip, hashing."""

import pytest

from tolfl.config import (
    ConfigError,
    ExperimentConfig,
    config_hash,
    parse_config,
    render_config,
)


def minimal(**overrides) -> dict:
    base = {"protocol": "tolfl", "N": 8, "k": 4, "epochs": 10}
    base.update(overrides)
    return base


def parse(**overrides) -> ExperimentConfig:
    import json

    return parse_config(json.dumps(minimal(**overrides)))


def test_minimal_config_fills_documented_defaults():
    cfg = parse()
    assert cfg.alpha == 1e-3
    assert cfg.local_epochs == 1
    assert cfg.local_lr == 1e-3
    assert cfg.dropout_enabled is True
    assert cfg.arch.hidden == [128, 96, 64]
    assert cfg.arch.code == 32
    assert cfg.arch.dropout == 0.2
    assert cfg.dataset.synthetic is not None
    assert cfg.dataset.synthetic.feature_dim == 112
    assert cfg.dataset.synthetic.num_classes == 4
    assert cfg.dataset.file is None
    assert cfg.anomaly_classes is None
    assert cfg.holdout_frac == 0.2
    assert cfg.partition_policy == "uniform"
    assert cfg.failures == []
    assert cfg.fl_server_down == "local-training"
    assert cfg.repetitions == 1
    assert cfg.seed == 0


def test_resolved_k_per_protocol():
    assert parse().resolved_k == 4
    assert parse(protocol="fl", k=None).resolved_k == 1
    assert parse(protocol="sbt", k=None).resolved_k == 8
    assert parse(protocol="batch", N=1, k=None).resolved_k == 1


def test_tolfl_requires_k():
    with pytest.raises(ConfigError, match="k"):
        parse(k=None)


def test_k_out_of_range_rejected():
    with pytest.raises(ConfigError, match="k"):
        parse(k=9)
    with pytest.raises(ConfigError, match="k"):
        parse(k=0)


def test_batch_requires_single_device():
    with pytest.raises(ConfigError, match="N"):
        parse(protocol="batch", N=5, k=None)
    assert parse(protocol="batch", N=1, k=1).resolved_k == 1


def test_fl_and_sbt_reject_incompatible_k():
    with pytest.raises(ConfigError, match="k"):
        parse(protocol="fl", k=2)
    with pytest.raises(ConfigError, match="k"):
        parse(protocol="sbt", k=3)
    assert parse(protocol="sbt", k=8).resolved_k == 8


def test_unknown_key_rejected_by_name():
    with pytest.raises(ConfigError, match="learning_rate"):
        parse(learning_rate=0.1)


def test_nested_unknown_key_rejected():
    with pytest.raises(ConfigError, match="arch.width"):
        parse(arch={"width": 3})


def test_duplicate_failure_device_rejected():
    failures = [{"device": 2, "epoch": 3}, {"device": 2, "epoch": 5}]
    with pytest.raises(ConfigError, match="device 2"):
        parse(failures=failures)


def test_failure_device_must_exist():
    with pytest.raises(ConfigError, match="device 8"):
        parse(failures=[{"device": 8, "epoch": 1}])


def test_failure_epoch_starts_at_one():
    with pytest.raises(ConfigError, match="epoch"):
        parse(failures=[{"device": 1, "epoch": 0}])


def test_dataset_sources_are_exclusive():
    with pytest.raises(ConfigError, match="synthetic or file"):
        parse(dataset={"synthetic": {}, "file": "x.txt"})


def test_empty_dataset_defaults_to_synthetic():
    cfg = parse(dataset={})
    assert cfg.dataset.synthetic is not None
    assert cfg.dataset.synthetic.samples_per_class == 3000


def test_anomaly_classes_must_be_non_empty_when_given():
    with pytest.raises(ConfigError, match="anomaly_classes"):
        parse(anomaly_classes=[])


def test_numeric_bounds_name_the_key():
    with pytest.raises(ConfigError, match="alpha"):
        parse(alpha=0.0)
    with pytest.raises(ConfigError, match="holdout_frac"):
        parse(holdout_frac=1.0)
    with pytest.raises(ConfigError, match="epochs"):
        parse(epochs=0)
    with pytest.raises(ConfigError, match="seed"):
        parse(seed=-1)


def test_invalid_json_reported():
    with pytest.raises(ConfigError, match="not valid JSON"):
        parse_config("{not json")


def test_top_level_must_be_object():
    with pytest.raises(ConfigError, match="JSON object"):
        parse_config("[1, 2]")


def test_render_parse_round_trip():
    cfg = parse(
        protocol="tolfl",
        N=6,
        k=3,
        epochs=20,
        alpha=0.005,
        dropout_enabled=False,
        arch={"hidden": [10, 8], "code": 4, "dropout": 0.1},
        dataset={"synthetic": {"feature_dim": 16, "samples_per_class": 50}},
        anomaly_classes=[2, 3],
        partition_policy="by-class",
        failures=[{"device": 5, "epoch": 7}],
        fl_server_down="halt",
        repetitions=3,
        seed=42,
        scenario="stress",
    )
    again = parse_config(render_config(cfg))
    assert again == cfg
    assert render_config(again) == render_config(cfg)


def test_round_trip_with_file_dataset():
    cfg = parse(dataset={"file": "data/traffic.txt"}, anomaly_classes=[1])
    again = parse_config(render_config(cfg))
    assert again == cfg
    assert again.dataset.file == "data/traffic.txt"
    assert again.dataset.synthetic is None


def test_config_hash_is_stable_and_sensitive():
    a = parse()
    b = parse()
    c = parse(seed=1)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 12
    assert all(ch in "0123456789abcdef" for ch in config_hash(a))


def test_hash_survives_render_round_trip():
    cfg = parse(alpha=0.0025, failures=[{"device": 1, "epoch": 4}])
    assert config_hash(parse_config(render_config(cfg))) == config_hash(cfg)
