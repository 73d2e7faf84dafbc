"""Experiment orchestration.

execute() turns one validated config into repetition runs, trace files, a
summary CSV and a provenance record. suite() fans a preset out over the four
protocols on a shared dataset so their numbers are comparable. report()
aggregates any directory of trace files back into a table.

All artifact bytes are deterministic: rerunning the same config into a fresh
directory reproduces every file exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import (
    ExperimentConfig,
    FailureConfig,
    SyntheticConfig,
    config_hash,
)
from .data import LabeledDataset, gen_synthetic, load_matrix_file, partition, split_anomaly
from .evaluation import auroc, score_model, summarize
from .model import ArchSpec, ParamVector, init_params
from .protocols import RoundConfig
from .simnet import (
    DivergenceError,
    FailureEvent,
    PostFailurePolicy,
    RunSetup,
    build_topology,
    run_training,
)
from .trace import RunTrace, read_trace, write_trace

SUMMARY_SCHEMA = "tolfl.summary/1"
REPORT_SCHEMA = "tolfl.report/1"
PROVENANCE_SCHEMA = "tolfl.provenance/1"
DIAGNOSTIC_SCHEMA = "tolfl.diagnostic/1"

SUITE_PRESETS = ("clean", "client-fail", "server-fail")

# Desk-scale suite defaults: small enough to finish in seconds per protocol,
# large enough that the failure scenarios separate cleanly. Calibrated so the
# server-fail preset shows the protocol ordering reliably over ten seeds.
SUITE_N = 8
SUITE_K = 4
SUITE_EPOCHS = 60
SUITE_REPETITIONS = 10
SUITE_SAMPLES_PER_CLASS = 80
SUITE_ALPHA = 2e-2

CSV_COLUMNS = ("method", "dataset", "scenario", "mean", "std", "runs")

OUT_DIR_ENV = "TOLFL_OUT_DIR"


def resolve_out_dir(explicit: Optional[str] = None) -> str:
    """Explicit argument beats the TOLFL_OUT_DIR variable beats ./runs."""
    if explicit:
        return explicit
    return os.environ.get(OUT_DIR_ENV) or os.path.join(os.getcwd(), "runs")


class ExperimentError(RuntimeError):
    """A run failed; a diagnostic file has already been written."""


# ---------------------------------------------------------------------------
# Single-config execution
# ---------------------------------------------------------------------------


def dataset_label(cfg: ExperimentConfig) -> str:
    if cfg.dataset.file is not None:
        return os.path.basename(cfg.dataset.file)
    return "synthetic"


def scenario_label(cfg: ExperimentConfig) -> str:
    if cfg.scenario is not None:
        return cfg.scenario
    return "clean" if not cfg.failures else "failure"


def _load_dataset(cfg: ExperimentConfig, rep_seed: int) -> LabeledDataset:
    if cfg.dataset.file is not None:
        return load_matrix_file(cfg.dataset.file)
    return gen_synthetic(cfg.dataset.synthetic.to_spec(), seed=rep_seed)


def _arch_for(cfg: ExperimentConfig, input_dim: int) -> ArchSpec:
    return ArchSpec(
        input_dim=input_dim,
        hidden_dims=tuple(cfg.arch.hidden),
        code_dim=cfg.arch.code,
        dropout_prob=cfg.arch.dropout,
    )


def _init_seed(rep_seed: int) -> int:
    # Separate seed domain so init never aliases data/partition draws.
    return int(np.random.SeedSequence(rep_seed, spawn_key=(6,)).generate_state(1)[0])


def build_run(
    cfg: ExperimentConfig, rep_seed: int
) -> Tuple[RunSetup, LabeledDataset, LabeledDataset]:
    """Resolve one repetition into a RunSetup plus its two test pools."""
    ds = _load_dataset(cfg, rep_seed)
    anomaly = cfg.anomaly_classes
    if anomaly is None:
        anomaly = [max(ds.class_ids)]
    train, test_normal, test_anomalous = split_anomaly(
        ds, anomaly, holdout_frac=cfg.holdout_frac, seed=rep_seed
    )
    if len(test_normal) == 0:
        raise ExperimentError("holdout_frac left no normal test rows; increase it")

    k = cfg.resolved_k
    if cfg.protocol == "batch":
        feats: Tuple[np.ndarray, ...] = (train.features,)
    else:
        part = partition(train, cfg.N, k, policy=cfg.partition_policy, seed=rep_seed)
        feats = tuple(train.features[idx] for idx in part.samples_of_device)
    topo = build_topology(cfg.N, k)

    arch = _arch_for(cfg, ds.feature_dim)
    setup = RunSetup(
        protocol=cfg.protocol,
        topology=topo,
        device_features=feats,
        init=init_params(arch, _init_seed(rep_seed)),
        round_cfg=RoundConfig(
            alpha=cfg.alpha,
            local_epochs=cfg.local_epochs,
            local_lr=cfg.local_lr,
            dropout_enabled=cfg.dropout_enabled,
            seed=rep_seed,
        ),
        epochs=cfg.epochs,
        failures=tuple(FailureEvent(f.device, f.epoch) for f in cfg.failures),
        policy=PostFailurePolicy(fl_server_down=cfg.fl_server_down),
        per_grad_cost=cfg.per_grad_cost,
        per_msg_cost=cfg.per_msg_cost,
        seed=rep_seed,
        config_hash=config_hash(cfg),
    )
    return setup, test_normal, test_anomalous


def _group_aurocs(
    trace: RunTrace, test_normal: LabeledDataset, test_anomalous: LabeledDataset
) -> List[float]:
    # Every surviving model group is scored on the same global test pools;
    # the run-level number is their unweighted mean.
    return [
        auroc(score_model(g.params, test_normal, test_anomalous)) for g in trace.groups
    ]


def _final_train_loss(trace: RunTrace) -> Optional[float]:
    for record in reversed(trace.records):
        if record.train_loss is not None:
            return record.train_loss
    return None


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass(frozen=True)
class TableRow:
    """One summary line: AUROC mean/std over repetitions of one config."""

    method: str
    dataset: str
    scenario: str
    mean: float
    std: float
    runs: int
    config_hash: str

    def csv_line(self) -> str:
        return ",".join(
            (self.method, self.dataset, self.scenario, repr(self.mean), repr(self.std), str(self.runs))
        )


def _write_csv(path: str, rows: Sequence[TableRow], schema: str, comments: Sequence[str] = ()) -> None:
    lines = [f"# schema: {schema}"]
    lines.extend(f"# {c}" for c in comments)
    lines.append(",".join(CSV_COLUMNS))
    lines.extend(row.csv_line() for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class ExecResult:
    config: ExperimentConfig
    config_hash: str
    aurocs: Tuple[float, ...]
    row: TableRow
    trace_paths: Tuple[str, ...]
    summary_path: str
    provenance_path: str


def execute(cfg: ExperimentConfig, out_dir: str) -> ExecResult:
    """Run every repetition of cfg, writing all artifacts under out_dir.

    Artifacts: run_<hash>_rep<i>.jsonl per repetition, summary_<hash>.csv,
    provenance_<hash>.json. A divergent repetition writes a diagnostic file
    and raises ExperimentError.
    """
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(cfg)
    label = dataset_label(cfg)
    scen = scenario_label(cfg)

    aurocs: List[float] = []
    trace_paths: List[str] = []
    for rep in range(cfg.repetitions):
        rep_seed = cfg.seed + rep
        setup, test_normal, test_anomalous = build_run(cfg, rep_seed)
        try:
            trace = run_training(setup)
        except DivergenceError as exc:
            diag_path = os.path.join(out_dir, f"diagnostic_{chash}_rep{rep:02d}.json")
            _atomic_write(
                diag_path,
                json.dumps(
                    {
                        "schema": DIAGNOSTIC_SCHEMA,
                        "config_hash": chash,
                        "rep": rep,
                        "rep_seed": rep_seed,
                        "failed_epoch": exc.epoch,
                        "message": str(exc),
                    },
                    sort_keys=True,
                    indent=2,
                )
                + "\n",
            )
            raise ExperimentError(
                f"repetition {rep} diverged at epoch {exc.epoch}; "
                f"diagnostic written to {diag_path}"
            ) from exc

        per_group = _group_aurocs(trace, test_normal, test_anomalous)
        run_auroc = float(np.mean(per_group))
        aurocs.append(run_auroc)

        path = os.path.join(out_dir, f"run_{chash}_rep{rep:02d}.jsonl")
        write_trace(
            trace,
            path,
            extra_summary={
                "method": cfg.protocol,
                "dataset": label,
                "scenario": scen,
                "rep": rep,
                "rep_seed": rep_seed,
                "auroc_per_group": per_group,
                "auroc_mean": run_auroc,
                "final_train_loss": _final_train_loss(trace),
            },
        )
        trace_paths.append(path)

    stats = summarize(aurocs, label=cfg.protocol)
    row = TableRow(
        method=cfg.protocol,
        dataset=label,
        scenario=scen,
        mean=stats.mean,
        std=stats.std,
        runs=stats.runs,
        config_hash=chash,
    )

    summary_path = os.path.join(out_dir, f"summary_{chash}.csv")
    _write_csv(summary_path, [row], SUMMARY_SCHEMA, comments=[f"config: {chash}"])

    provenance_path = os.path.join(out_dir, f"provenance_{chash}.json")
    _atomic_write(
        provenance_path,
        json.dumps(
            {
                "schema": PROVENANCE_SCHEMA,
                "config": cfg.model_dump(mode="json"),
                "config_hash": chash,
                "rep_seeds": [cfg.seed + i for i in range(cfg.repetitions)],
                "trace_files": [os.path.basename(p) for p in trace_paths],
                "summary_file": os.path.basename(summary_path),
                "auroc": {"per_rep": aurocs, "mean": stats.mean, "std": stats.std},
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
    )

    return ExecResult(
        config=cfg,
        config_hash=chash,
        aurocs=tuple(aurocs),
        row=row,
        trace_paths=tuple(trace_paths),
        summary_path=summary_path,
        provenance_path=provenance_path,
    )


# ---------------------------------------------------------------------------
# Suite presets
# ---------------------------------------------------------------------------


def _client_fail_device(protocol: str, n_devices: int, k: int) -> Optional[int]:
    """Highest-id device that is not a head; None when nothing qualifies."""
    if protocol == "batch":
        return None
    if protocol == "sbt":
        return n_devices - 1  # flat chain: every loss is a client-grade loss
    topo = build_topology(n_devices, 1 if protocol == "fl" else k)
    for device in range(n_devices - 1, -1, -1):
        if not topo.is_head(device):
            return device
    return None


def _preset_failures(
    preset: str, protocol: str, n_devices: int, k: int, epochs: int
) -> List[FailureConfig]:
    if preset == "clean":
        return []
    epoch = max(1, epochs // 2)
    if preset == "server-fail":
        # Device 0 is the aggregation point in every protocol: the pooled
        # server for batch, the fl server, the first chain node for sbt and
        # the head of cluster 1 for tolfl.
        return [FailureConfig(device=0, epoch=epoch)]
    if preset == "client-fail":
        device = _client_fail_device(protocol, n_devices, k)
        if device is None:
            return []
        return [FailureConfig(device=device, epoch=epoch)]
    raise ValueError(f"unknown preset {preset!r}; choose from {SUITE_PRESETS}")


def suite_configs(
    preset: str,
    N: int = SUITE_N,
    k: int = SUITE_K,
    epochs: int = SUITE_EPOCHS,
    seed: int = 0,
    repetitions: int = SUITE_REPETITIONS,
    samples_per_class: int = SUITE_SAMPLES_PER_CLASS,
    alpha: float = SUITE_ALPHA,
) -> List[ExperimentConfig]:
    """The four protocol configs a preset compares, sharing data and seeds."""
    if preset not in SUITE_PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {SUITE_PRESETS}")
    if not 1 <= k <= N:
        raise ValueError(f"k must lie in 1..N (k={k}, N={N})")
    dataset = {"synthetic": {"samples_per_class": samples_per_class}}
    shared = dict(
        epochs=epochs,
        alpha=alpha,
        seed=seed,
        repetitions=repetitions,
        dataset=dataset,
        scenario=preset,
    )
    configs = []
    for protocol in ("batch", "fl", "sbt", "tolfl"):
        n = 1 if protocol == "batch" else N
        cfg = ExperimentConfig(
            protocol=protocol,
            N=n,
            k=k if protocol == "tolfl" else None,
            failures=_preset_failures(preset, protocol, n, k, epochs),
            **shared,
        )
        configs.append(cfg)
    return configs


def _suite_hash(preset: str, configs: Sequence[ExperimentConfig]) -> str:
    payload = json.dumps(
        {"preset": preset, "configs": [config_hash(c) for c in configs]},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class SuiteResult:
    preset: str
    suite_hash: str
    results: Tuple[ExecResult, ...]
    rows: Tuple[TableRow, ...]
    table_path: str


def run_suite(preset: str, out_dir: str, **overrides) -> SuiteResult:
    """Run a preset over all four protocols and write a combined table."""
    configs = suite_configs(preset, **overrides)
    os.makedirs(out_dir, exist_ok=True)
    results = tuple(execute(cfg, out_dir) for cfg in configs)
    rows = tuple(r.row for r in results)
    shash = _suite_hash(preset, configs)
    table_path = os.path.join(out_dir, f"suite_{preset}_{shash}.csv")
    comments = [f"preset: {preset}"] + [
        f"config {r.row.method}: {r.config_hash}" for r in results
    ]
    _write_csv(table_path, rows, SUMMARY_SCHEMA, comments=comments)
    return SuiteResult(
        preset=preset, suite_hash=shash, results=results, rows=rows, table_path=table_path
    )


# ---------------------------------------------------------------------------
# Report over a trace directory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReportResult:
    rows: Tuple[TableRow, ...]
    table_path: str
    skipped: Tuple[str, ...]


def report(trace_dir: str, out_path: Optional[str] = None) -> ReportResult:
    """Aggregate every readable trace in trace_dir into one table.

    Traces group by (method, dataset, scenario, config hash); each group
    contributes the mean/std of its per-run AUROC values. Files that are not
    traces, or traces without evaluation summaries, are skipped and listed.
    """
    if not os.path.isdir(trace_dir):
        raise ValueError(f"not a directory: {trace_dir}")
    groups: Dict[Tuple[str, str, str, str], List[float]] = {}
    skipped: List[str] = []
    for name in sorted(os.listdir(trace_dir)):
        if not name.endswith(".jsonl"):
            continue
        path = os.path.join(trace_dir, name)
        try:
            header, _, summary = read_trace(path)
        except (ValueError, json.JSONDecodeError):
            skipped.append(name)
            continue
        if "auroc_mean" not in summary:
            skipped.append(name)
            continue
        key = (
            str(summary.get("method", header["protocol"])),
            str(summary.get("dataset", "unknown")),
            str(summary.get("scenario", "unspecified")),
            str(header.get("config_hash", "")),
        )
        groups.setdefault(key, []).append(float(summary["auroc_mean"]))

    rows = []
    for (method, dataset, scenario, chash), values in sorted(groups.items()):
        stats = summarize(values, label=method)
        rows.append(
            TableRow(
                method=method,
                dataset=dataset,
                scenario=scenario,
                mean=stats.mean,
                std=stats.std,
                runs=stats.runs,
                config_hash=chash,
            )
        )
    rows.sort(key=lambda r: (r.scenario, r.dataset, r.method, r.config_hash))

    table_path = out_path or os.path.join(trace_dir, "report.csv")
    _write_csv(table_path, rows, REPORT_SCHEMA)
    return ReportResult(rows=tuple(rows), table_path=table_path, skipped=tuple(skipped))
