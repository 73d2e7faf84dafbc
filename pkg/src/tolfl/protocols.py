"""Training protocols: local gradients, weighted merging, and round functions.

One round of every protocol is a single global step theta - alpha * g where g
is the sample-weighted mean of per-device gradients. The protocols differ only
in how that mean is assembled:

* ``batch_round``: one gradient over the pooled data.
* ``fl_round``: all devices report to one aggregator (a 1-cluster round).
* ``sbt_round``: devices merge sequentially in a flat chain (N singleton
  clusters).
* ``tolfl_round``: federated averaging inside each cluster, then the cluster
  results merge sequentially in cluster order.

Because the merge is an exact running weighted mean, the round output is
independent of the clustering whenever each device computes one plain
gradient (local_epochs = 1, dropout off); the cluster count only changes the
communication pattern. All phases run sequentially and deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from .model import GradVector, ParamVector, apply_update, grad

DeviceBatch = Tuple[int, np.ndarray]


@dataclass(frozen=True)
class RoundConfig:
    """Knobs shared by every protocol round.

    local_epochs (E) is the number of full-batch steps a device takes on its
    own data before reporting; with E = 1 the report is the plain gradient.
    local_lr only matters for E > 1. seed feeds the per-device dropout masks.
    """

    alpha: float
    local_epochs: int = 1
    local_lr: float = 1e-3
    dropout_enabled: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.local_epochs < 1:
            raise ValueError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if self.local_lr <= 0:
            raise ValueError(f"local_lr must be positive, got {self.local_lr}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True)
class ClusterUpdate:
    """Sample count and sample-weighted mean gradient reported by one branch."""

    n: int
    g: GradVector

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError(f"sample count must be >= 0, got {self.n}")


@dataclass(frozen=True)
class GradAccumulator:
    """Running sample-weighted mean of gradients; merging is exact in the
    weights (integer counts) and order-independent up to float rounding."""

    n: int
    g: GradVector

    @classmethod
    def empty(cls, arch) -> "GradAccumulator":
        return cls(0, GradVector.zeros(arch))


def mask_seed_for(seed: int, device_id: int, epoch: int, step: int = 0) -> int:
    """Stable dropout seed per (run seed, device, epoch, local step).

    Derived through SeedSequence spawn keys, so it never depends on cluster
    membership: regrouping devices cannot change their masks.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(4, device_id, epoch, step))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def merge(acc: GradAccumulator, upd: ClusterUpdate) -> GradAccumulator:
    """Fold one update into the running mean: n' = n + m, g' = (m/n')*g_upd +
    (1 - m/n')*g_acc. An empty update leaves the accumulator untouched."""
    if upd.n == 0:
        return acc
    if acc.g.arch != upd.g.arch:
        raise ValueError("cannot merge gradients from different architectures")
    if acc.n == 0:
        return GradAccumulator(upd.n, upd.g)
    n_new = acc.n + upd.n
    r = upd.n / n_new
    mixed = r * upd.g.values + (1.0 - r) * acc.g.values
    return GradAccumulator(n_new, GradVector(acc.g.arch, mixed))


def _as_features(x: np.ndarray, input_dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, input_dim)
    if arr.ndim != 2 or arr.shape[1] != input_dim:
        raise ValueError(f"device batch must be (n, {input_dim}), got shape {arr.shape}")
    return arr


def local_gradient(
    device_samples: np.ndarray,
    theta: ParamVector,
    cfg: RoundConfig,
    device_id: int = 0,
    epoch: int = 0,
) -> ClusterUpdate:
    """One device's contribution for this round.

    E = 1 returns the exact mean gradient of the local batch. For E > 1 the
    device runs E full-batch steps at local_lr and reports the equivalent
    gradient (theta - theta_after) / local_lr, which reduces to the plain
    gradient at E = 1. An empty batch contributes a zero update.
    """
    X = _as_features(device_samples, theta.arch.input_dim)
    n = X.shape[0]
    if n == 0:
        return ClusterUpdate(0, GradVector.zeros(theta.arch))
    mode = "train" if cfg.dropout_enabled else "eval"
    if cfg.local_epochs == 1:
        _, g = grad(theta, X, mode=mode, mask_seed=mask_seed_for(cfg.seed, device_id, epoch, 0))
        return ClusterUpdate(n, g)
    current = theta
    for step in range(cfg.local_epochs):
        _, g = grad(current, X, mode=mode, mask_seed=mask_seed_for(cfg.seed, device_id, epoch, step))
        current = apply_update(current, g, cfg.local_lr)
    equivalent = (theta.values - current.values) / cfg.local_lr
    return ClusterUpdate(n, GradVector(theta.arch, equivalent))


def fedavg_cluster(
    members: Sequence[DeviceBatch],
    theta: ParamVector,
    cfg: RoundConfig,
    epoch: int = 0,
) -> ClusterUpdate:
    """Aggregate one cluster: members' updates merge in the given order into a
    sample-weighted mean. A cluster with no data reports a zero update."""
    acc = GradAccumulator.empty(theta.arch)
    for device_id, batch in members:
        acc = merge(acc, local_gradient(batch, theta, cfg, device_id=device_id, epoch=epoch))
    return ClusterUpdate(acc.n, acc.g)


def _normalise(
    batches: Iterable[Union[np.ndarray, DeviceBatch]],
) -> List[DeviceBatch]:
    out: List[DeviceBatch] = []
    for i, item in enumerate(batches):
        if isinstance(item, tuple) and len(item) == 2 and np.isscalar(item[0]):
            out.append((int(item[0]), item[1]))
        else:
            out.append((i, item))  # positional device ids
    return out


def tolfl_round(
    clusters: Sequence[Sequence[DeviceBatch]],
    theta: ParamVector,
    cfg: RoundConfig,
    epoch: int = 0,
) -> ParamVector:
    """One clustered round: per-cluster federated averaging, then a sequential
    merge across clusters in the given (cluster id) order, then one step
    theta - alpha * g. With no data anywhere the round is a no-op."""
    total = GradAccumulator.empty(theta.arch)
    for members in clusters:
        total = merge(total, fedavg_cluster(members, theta, cfg, epoch=epoch))
    if total.n == 0:
        return theta
    return apply_update(theta, total.g, cfg.alpha)


def fl_round(
    devices: Sequence[Union[np.ndarray, DeviceBatch]],
    theta: ParamVector,
    cfg: RoundConfig,
    epoch: int = 0,
) -> ParamVector:
    """Star-topology round: every device reports to one aggregator. Identical
    to tolfl_round with a single cluster, bit for bit."""
    return tolfl_round([_normalise(devices)], theta, cfg, epoch=epoch)


def sbt_round(
    device_batches: Sequence[Union[np.ndarray, DeviceBatch]],
    theta: ParamVector,
    cfg: RoundConfig,
    epoch: int = 0,
) -> ParamVector:
    """Flat sequential round: devices merge one after another in the given
    order. Identical to tolfl_round with all-singleton clusters."""
    return tolfl_round([[db] for db in _normalise(device_batches)], theta, cfg, epoch=epoch)


def batch_round(
    all_samples: np.ndarray,
    theta: ParamVector,
    cfg: RoundConfig,
    epoch: int = 0,
) -> ParamVector:
    """Centralised round: one update computed on the pooled data (device 0's
    seed stream). No-op when the pool is empty."""
    upd = local_gradient(all_samples, theta, cfg, device_id=0, epoch=epoch)
    if upd.n == 0:
        return theta
    return apply_update(theta, upd.g, cfg.alpha)
