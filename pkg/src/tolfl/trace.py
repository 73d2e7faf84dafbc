"""Run traces: per-epoch records, final model groups, and JSONL persistence.

A trace file is line-delimited JSON with a versioned schema: one header
record, one record per epoch, and one summary record. Keys are sorted and
floats use repr formatting, so identical runs serialise to identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .model import ParamVector

TRACE_SCHEMA = "tolfl.trace/1"


@dataclass(frozen=True)
class CommsReport:
    """Per-round message counts by channel plus the model payload size.

    Channels: client-to-server (within a star or cluster), server-to-server
    (between cluster heads), client-to-client (flat chains). Byte totals are
    always count * model_size_bytes.
    """

    c2s_count: int = 0
    s2s_count: int = 0
    c2c_count: int = 0
    model_size_bytes: int = 0

    @property
    def total_messages(self) -> int:
        return self.c2s_count + self.s2s_count + self.c2c_count

    @property
    def total_bytes(self) -> int:
        return self.total_messages * self.model_size_bytes

    def to_dict(self) -> Dict:
        return {
            "c2s": self.c2s_count,
            "s2s": self.s2s_count,
            "c2c": self.c2c_count,
            "model_bytes": self.model_size_bytes,
            "total_messages": self.total_messages,
            "total_bytes": self.total_bytes,
        }


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    live: Tuple[int, ...]
    participants: Tuple[int, ...]
    n_train_samples: int
    train_loss: float | None  # None until any data has been seen
    comms: CommsReport
    virtual_time: float
    noop: bool = False
    warnings: Tuple[str, ...] = ()

    def to_dict(self) -> Dict:
        return {
            "record": "epoch",
            "epoch": self.epoch,
            "live": list(self.live),
            "participants": list(self.participants),
            "n_train_samples": self.n_train_samples,
            "train_loss": self.train_loss,
            "comms": self.comms.to_dict(),
            "virtual_time": self.virtual_time,
            "noop": self.noop,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class GroupResult:
    """A set of devices sharing one final model (one group for collaborative
    runs, one per surviving device after an FL server loss)."""

    devices: Tuple[int, ...]
    n_samples: int
    params: ParamVector = field(repr=False)

    def param_digest(self) -> str:
        return hashlib.sha256(self.params.values.tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class RunTrace:
    protocol: str
    n_devices: int
    k: int
    epochs_requested: int
    seed: int
    config_hash: str
    records: Tuple[EpochRecord, ...]
    groups: Tuple[GroupResult, ...]

    @property
    def total_messages(self) -> int:
        return sum(r.comms.total_messages for r in self.records)

    @property
    def total_bytes(self) -> int:
        return sum(r.comms.total_bytes for r in self.records)

    @property
    def total_virtual_time(self) -> float:
        return float(sum(r.virtual_time for r in self.records))

    def header_dict(self) -> Dict:
        return {
            "record": "header",
            "schema": TRACE_SCHEMA,
            "protocol": self.protocol,
            "n_devices": self.n_devices,
            "k": self.k,
            "epochs": self.epochs_requested,
            "seed": self.seed,
            "config_hash": self.config_hash,
        }

    def summary_dict(self, extra: Dict | None = None) -> Dict:
        out = {
            "record": "summary",
            "final_groups": [
                {
                    "devices": list(g.devices),
                    "n_samples": g.n_samples,
                    "param_digest": g.param_digest(),
                }
                for g in self.groups
            ],
            "total_messages": self.total_messages,
            "total_bytes": self.total_bytes,
            "total_virtual_time": self.total_virtual_time,
        }
        if extra:
            out.update(extra)
        return out


def _dump(record: Dict) -> str:
    return json.dumps(record, sort_keys=True)


def write_trace(trace: RunTrace, path: str, extra_summary: Dict | None = None) -> None:
    """Atomically write header + epoch records + summary as JSONL."""
    lines = [_dump(trace.header_dict())]
    lines.extend(_dump(r.to_dict()) for r in trace.records)
    lines.append(_dump(trace.summary_dict(extra_summary)))
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_trace(path: str) -> Tuple[Dict, List[Dict], Dict]:
    """Return (header, epoch_records, summary) dictionaries from a trace file."""
    header: Dict | None = None
    summary: Dict | None = None
    epochs: List[Dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path} line {lineno}: invalid JSON ({exc})") from None
            kind = rec.get("record")
            if kind == "header":
                if rec.get("schema") != TRACE_SCHEMA:
                    raise ValueError(
                        f"{path}: unsupported trace schema {rec.get('schema')!r}"
                    )
                header = rec
            elif kind == "epoch":
                epochs.append(rec)
            elif kind == "summary":
                summary = rec
            else:
                raise ValueError(f"{path} line {lineno}: unknown record kind {kind!r}")
    if header is None or summary is None:
        raise ValueError(f"{path}: trace is missing header or summary record")
    return header, epochs, summary
