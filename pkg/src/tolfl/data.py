"""Datasets: synthetic class-conditional generation, anomaly splits, partitioning.

Samples live in a flat feature matrix with one integer class label per row.
Anomaly detection is label-blind at training time: the split below removes the
designated anomaly classes from training entirely and holds out a fraction of
every normal class for scoring. Partitioning hands training rows to devices;
with the uniform policy the row-to-device map does not depend on the cluster
count, so runs that differ only in k train on identical device datasets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix (n, d) plus one integer label per row."""

    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        feats = np.array(self.features, dtype=np.float64)
        labs = np.array(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        if labs.ndim != 1 or labs.shape[0] != feats.shape[0]:
            raise ValueError(
                f"labels must be 1-D with one entry per row "
                f"({feats.shape[0]} rows, {labs.shape} labels)"
            )
        feats.setflags(write=False)
        labs.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_ids(self) -> Tuple[int, ...]:
        return tuple(int(c) for c in np.unique(self.labels))

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]))

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx])


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Class-conditional Gaussian generator around well-separated class means.

    The defaults emulate a radio-fingerprinting corpus shape: 112 features,
    4 classes, 3000 samples per class. samples_per_class scales down freely
    for desk-sized experiments.
    """

    feature_dim: int = 112
    num_classes: int = 4
    samples_per_class: int = 3000
    class_mean_separation: float = 6.0
    noise_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.samples_per_class < 1:
            raise ValueError(f"samples_per_class must be >= 1, got {self.samples_per_class}")
        if self.class_mean_separation <= 0:
            raise ValueError("class_mean_separation must be positive")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")


def gen_synthetic(spec: SyntheticSpec, seed: int) -> LabeledDataset:
    """Draw class means on a sphere of radius class_mean_separation, then
    samples as mean + noise_scale * standard normal. Fully seed-determined."""
    mean_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    noise_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))

    raw = mean_rng.normal(size=(spec.num_classes, spec.feature_dim))
    means = spec.class_mean_separation * raw / np.linalg.norm(raw, axis=1, keepdims=True)

    blocks: List[np.ndarray] = []
    labels: List[np.ndarray] = []
    for c in range(spec.num_classes):
        noise = noise_rng.normal(size=(spec.samples_per_class, spec.feature_dim))
        blocks.append(means[c] + spec.noise_scale * noise)
        labels.append(np.full(spec.samples_per_class, c, dtype=np.int64))
    return LabeledDataset(np.vstack(blocks), np.concatenate(labels))


# ---------------------------------------------------------------------------
# Anomaly split
# ---------------------------------------------------------------------------


def split_anomaly(
    ds: LabeledDataset,
    anomaly_classes: Sequence[int],
    holdout_frac: float = 0.2,
    seed: int = 0,
) -> Tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Split into (train, test_normal, test_anomalous).

    Anomaly classes never reach training. Each remaining class contributes
    ceil((1 - holdout_frac) * n) rows to train; the rest form test_normal.
    The per-class holdout choice is a seeded shuffle, fixed by default.
    """
    anomalies = set(int(c) for c in anomaly_classes)
    present = set(ds.class_ids)
    if not anomalies:
        raise ValueError("anomaly_classes must be non-empty")
    if not anomalies <= present:
        raise ValueError(f"anomaly classes {sorted(anomalies - present)} not present in dataset")
    if anomalies == present:
        raise ValueError("anomaly_classes must leave at least one normal class")
    if not 0.0 <= holdout_frac < 1.0:
        raise ValueError(f"holdout_frac must be in [0, 1), got {holdout_frac}")

    anom_mask = np.isin(ds.labels, sorted(anomalies))
    test_anomalous = ds.subset(np.flatnonzero(anom_mask))

    train_idx: List[np.ndarray] = []
    holdout_idx: List[np.ndarray] = []
    for c in sorted(present - anomalies):
        idx = np.flatnonzero(ds.labels == c)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2, c)))
        shuffled = rng.permutation(idx)
        n_train = math.ceil((1.0 - holdout_frac) * idx.size)
        train_idx.append(np.sort(shuffled[:n_train]))
        holdout_idx.append(np.sort(shuffled[n_train:]))

    train = ds.subset(np.concatenate(train_idx))
    test_normal = ds.subset(
        np.concatenate(holdout_idx) if any(h.size for h in holdout_idx) else np.empty(0, dtype=np.int64)
    )
    return train, test_normal, test_anomalous


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------


def assign_clusters(n_devices: int, k: int) -> Tuple[int, ...]:
    """Contiguous device blocks: cluster ids are 1-based, sizes differ by at
    most one and never exceed ceil(N / k)."""
    if n_devices < 1:
        raise ValueError(f"n_devices must be >= 1, got {n_devices}")
    if not 1 <= k <= n_devices:
        raise ValueError(f"k must satisfy 1 <= k <= n_devices ({k=}, {n_devices=})")
    base, rem = divmod(n_devices, k)
    out: List[int] = []
    for cluster in range(1, k + 1):
        size = base + (1 if cluster <= rem else 0)
        out.extend([cluster] * size)
    return tuple(out)


@dataclass(frozen=True)
class Partition:
    """Device -> cluster id and device -> dataset row indices."""

    cluster_of_device: Tuple[int, ...]
    samples_of_device: Tuple[np.ndarray, ...]

    @property
    def n_devices(self) -> int:
        return len(self.cluster_of_device)

    @property
    def k(self) -> int:
        return max(self.cluster_of_device)

    def devices_in_cluster(self, cluster: int) -> Tuple[int, ...]:
        return tuple(d for d, c in enumerate(self.cluster_of_device) if c == cluster)

    def sample_count(self, device: int) -> int:
        return int(self.samples_of_device[device].size)


def partition(
    ds: LabeledDataset,
    n_devices: int,
    k: int,
    policy: str = "uniform",
    seed: int = 0,
) -> Partition:
    """Assign every training row to exactly one device.

    uniform: one seeded shuffle dealt round-robin over devices; the deal
    ignores k, so device datasets are identical for every cluster count.
    by-class: whole classes go to clusters round-robin (needs at least k
    classes); within a cluster the rows are split contiguously over members,
    which keeps devices class-skewed.
    """
    clusters = assign_clusters(n_devices, k)
    if policy == "uniform":
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3,)))
        perm = rng.permutation(len(ds))
        shares = tuple(np.sort(perm[d::n_devices]) for d in range(n_devices))
    elif policy == "by-class":
        class_ids = ds.class_ids
        if len(class_ids) < k:
            raise ValueError(
                f"by-class partition needs at least k classes "
                f"({len(class_ids)} classes, k={k})"
            )
        per_cluster: List[List[np.ndarray]] = [[] for _ in range(k)]
        for i, c in enumerate(class_ids):
            per_cluster[i % k].append(np.flatnonzero(ds.labels == c))
        share_lists: List[np.ndarray] = [np.empty(0, dtype=np.int64)] * n_devices
        for cluster in range(1, k + 1):
            members = [d for d, cl in enumerate(clusters) if cl == cluster]
            rows = np.concatenate(per_cluster[cluster - 1])
            for device, chunk in zip(members, np.array_split(rows, len(members))):
                share_lists[device] = chunk.astype(np.int64)
        shares = tuple(share_lists)
    else:
        raise ValueError(f"unknown partition policy {policy!r}")
    return Partition(clusters, shares)


# ---------------------------------------------------------------------------
# Matrix files
# ---------------------------------------------------------------------------

_MATRIX_HEADER = "# tolfl matrix v1"


def save_matrix_file(ds: LabeledDataset, path: str) -> None:
    """Plain-text rows of comma-separated features with a trailing integer
    label. repr() keeps float64 values exact across a round trip."""
    lines = [_MATRIX_HEADER, f"# columns: {ds.feature_dim} features, label"]
    for row, label in zip(ds.features, ds.labels):
        lines.append(",".join(repr(float(v)) for v in row) + f",{int(label)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_matrix_file(path: str) -> LabeledDataset:
    """Parse a matrix file; malformed content reports the offending line."""
    rows: List[List[float]] = []
    labels: List[int] = []
    width: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split(",")
            if len(fields) < 2:
                raise ValueError(f"line {lineno}: expected features and a label, got {line!r}")
            try:
                feats = [float(v) for v in fields[:-1]]
            except ValueError as exc:
                raise ValueError(f"line {lineno}: non-numeric feature value ({exc})") from None
            label_text = fields[-1].strip()
            try:
                label = int(label_text)
            except ValueError:
                raise ValueError(f"line {lineno}: label must be an integer, got {label_text!r}") from None
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise ValueError(
                    f"line {lineno}: row has {len(feats)} features, expected {width}"
                )
            rows.append(feats)
            labels.append(label)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return LabeledDataset(np.array(rows), np.array(labels))
