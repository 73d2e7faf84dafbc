"""Network simulation: topology, failure injection, accounting, training loop.

Devices are numbered 0..N-1 and grouped into k clusters of near-equal size;
the lowest-id member of each cluster is its head by default. At k = 1 the
single head doubles as the FL server, at k = N every device is its own head
and the protocol degenerates to the flat sequential chain.

Failure semantics: a failure takes effect at the start of its stated epoch.
A dead non-head device just stops contributing; a dead head removes its whole
cluster from every later round. Losing the k = 1 head (the FL server) either
halts training or sends every surviving client into isolated local training,
as configured. The centralised batch "topology" is a single device holding
the pooled data, so a server failure there always halts. The live set never
grows back: there is no re-election and no rejoin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .data import assign_clusters
from .model import ParamVector, apply_update, batch_loss, param_count
from .protocols import RoundConfig, local_gradient, tolfl_round
from .trace import CommsReport, EpochRecord, GroupResult, RunTrace

PROTOCOLS = ("batch", "fl", "sbt", "tolfl")

BYTES_PER_PARAM = 8  # float64 payloads


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


# ---------------------------------------------------------------------------
# Topology
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Topology:
    """Immutable device/cluster layout plus per-device liveness."""

    k: int
    cluster_of_device: Tuple[int, ...]
    head_of_cluster: Tuple[int, ...]  # index c-1 holds the head of cluster c
    live: Tuple[bool, ...]

    @property
    def n_devices(self) -> int:
        return len(self.cluster_of_device)

    def is_live(self, device: int) -> bool:
        return self.live[device]

    def live_devices(self) -> Tuple[int, ...]:
        return tuple(d for d in range(self.n_devices) if self.live[d])

    def head_of(self, device: int) -> int:
        return self.head_of_cluster[self.cluster_of_device[device] - 1]

    def is_head(self, device: int) -> bool:
        return self.head_of(device) == device

    def role(self, device: int) -> str:
        if not self.is_head(device):
            return "client"
        return "fl-server" if self.k == 1 else "cluster-head"

    def live_head_clusters(self) -> Tuple[int, ...]:
        """Clusters whose head is still alive, ascending."""
        return tuple(
            c for c in range(1, self.k + 1) if self.live[self.head_of_cluster[c - 1]]
        )

    def participants(self) -> Tuple[int, ...]:
        """Live devices whose cluster head is also alive: exactly the devices
        that can take part in a collaborative round."""
        reachable = set(self.live_head_clusters())
        return tuple(
            d
            for d in range(self.n_devices)
            if self.live[d] and self.cluster_of_device[d] in reachable
        )

    def members_of(self, cluster: int, live_only: bool = True) -> Tuple[int, ...]:
        return tuple(
            d
            for d, c in enumerate(self.cluster_of_device)
            if c == cluster and (self.live[d] or not live_only)
        )

    def with_dead(self, device: int) -> "Topology":
        live = list(self.live)
        live[device] = False
        return replace(self, live=tuple(live))


def build_topology(
    n_devices: int,
    k: int,
    head_policy: str = "lowest-id",
    seed: int = 0,
) -> Topology:
    """Contiguous near-even clusters; heads picked by policy."""
    clusters = assign_clusters(n_devices, k)
    heads: List[int] = []
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(5,)))
    for c in range(1, k + 1):
        members = [d for d, cl in enumerate(clusters) if cl == c]
        if head_policy == "lowest-id":
            heads.append(members[0])
        elif head_policy == "random":
            heads.append(int(rng.choice(members)))
        else:
            raise ValueError(f"unknown head policy {head_policy!r}")
    return Topology(k, clusters, tuple(heads), tuple([True] * n_devices))


# ---------------------------------------------------------------------------
# Failures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FailureEvent:
    """Device `device` fails at the start of epoch `epoch` (1-based)."""

    device: int
    epoch: int

    def __post_init__(self) -> None:
        if self.device < 0:
            raise ValueError(f"device must be >= 0, got {self.device}")
        if self.epoch < 1:
            raise ValueError(f"failure epoch must be >= 1, got {self.epoch}")


@dataclass(frozen=True)
class PostFailurePolicy:
    """What happens after the critical aggregator dies.

    fl_server_down applies at k = 1 when the head (FL server) fails:
    "halt" freezes the last broadcast model, "local-training" lets every
    surviving client keep training alone. A dead batch server always halts.
    """

    fl_server_down: str = "local-training"
    batch_server_down: str = "halt"

    def __post_init__(self) -> None:
        if self.fl_server_down not in ("halt", "local-training"):
            raise ValueError(f"fl_server_down must be halt or local-training, got {self.fl_server_down!r}")
        if self.batch_server_down != "halt":
            raise ValueError("batch_server_down only supports halt")


def inject_failures(
    topo: Topology,
    schedule: Sequence[FailureEvent],
    epoch: int,
) -> Tuple[Topology, Tuple[str, ...]]:
    """Apply the events scheduled for this epoch. Failing a dead device is a
    no-op that only leaves a warning for the trace."""
    warnings: List[str] = []
    for event in schedule:
        if event.epoch != epoch:
            continue
        if event.device >= topo.n_devices:
            raise ValueError(
                f"failure event names device {event.device}, topology has {topo.n_devices}"
            )
        if not topo.is_live(event.device):
            warnings.append(f"device {event.device} already failed; event at epoch {epoch} ignored")
            continue
        topo = topo.with_dead(event.device)
    return topo, tuple(warnings)


# ---------------------------------------------------------------------------
# Accounting
# ---------------------------------------------------------------------------


def model_size_bytes(arch) -> int:
    return param_count(arch) * BYTES_PER_PARAM


def account_round(
    topo: Topology,
    protocol: str,
    size_bytes: int,
    broadcast_as_unicast: bool = False,
) -> CommsReport:
    """Message counts for one collaborative round on the current topology.

    fl:    one model down and one up per live device (2N on the C2S channel;
           the star server is infrastructure, so the head's own exchange
           counts like any client's).
    sbt:   N-1 chain handoffs plus the final broadcast on the C2C channel.
    tolfl: 2 * (participants - heads) C2S inside clusters, heads - 1 chain
           handoffs plus the final broadcast on the S2S channel.
    batch: no messages. The final broadcast counts as one message unless
           broadcast_as_unicast charges it per recipient.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    if protocol == "batch":
        return CommsReport(model_size_bytes=size_bytes)

    participants = topo.participants()
    p = len(participants)
    if p == 0:
        return CommsReport(model_size_bytes=size_bytes)

    def broadcast_cost() -> int:
        return max(p - 1, 0) if broadcast_as_unicast else 1

    if protocol == "fl":
        return CommsReport(c2s_count=2 * p, model_size_bytes=size_bytes)
    if protocol == "sbt":
        return CommsReport(c2c_count=(p - 1) + broadcast_cost(), model_size_bytes=size_bytes)
    heads = len(topo.live_head_clusters())
    return CommsReport(
        c2s_count=2 * (p - heads),
        s2s_count=(heads - 1) + broadcast_cost(),
        model_size_bytes=size_bytes,
    )


def virtual_time(
    topo: Topology,
    protocol: str,
    samples_of_device: Mapping[int, int] | Sequence[int],
    per_grad_cost: float = 1.0,
    per_msg_cost: float = 1.0,
) -> float:
    """Duration of one round: parallel phases contribute their slowest branch,
    sequential phases (chains, server collection, the broadcast) add up.

    batch: total_samples * per_grad_cost.
    fl / sbt: max device compute + N sequential message hops.
    tolfl: max device compute + slowest in-cluster collection (parallel
    across clusters) + the head chain and broadcast. Equal to fl at k = 1 and
    to sbt at k = N.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")

    def n_of(d: int) -> int:
        return int(samples_of_device[d])

    if protocol == "batch":
        total = sum(n_of(d) for d in topo.live_devices())
        return total * per_grad_cost

    participants = topo.participants()
    if not participants:
        return 0.0
    compute = max(n_of(d) for d in participants) * per_grad_cost
    p = len(participants)
    if protocol in ("fl", "sbt"):
        return compute + p * per_msg_cost

    clusters = topo.live_head_clusters()
    collect = max(len(topo.members_of(c)) - 1 for c in clusters)
    return compute + (collect + len(clusters)) * per_msg_cost


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSetup:
    """Everything one training run needs, already resolved and seeded."""

    protocol: str
    topology: Topology
    device_features: Tuple[np.ndarray, ...]
    init: ParamVector
    round_cfg: RoundConfig
    epochs: int
    failures: Tuple[FailureEvent, ...] = ()
    policy: PostFailurePolicy = field(default_factory=PostFailurePolicy)
    per_grad_cost: float = 1.0
    per_msg_cost: float = 1.0
    seed: int = 0
    config_hash: str = ""

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if len(self.device_features) != self.topology.n_devices:
            raise ValueError(
                f"{len(self.device_features)} device batches for "
                f"{self.topology.n_devices} devices"
            )
        if self.protocol == "fl" and self.topology.k != 1:
            raise ValueError("fl runs on a k=1 topology")
        if self.protocol == "sbt" and self.topology.k != self.topology.n_devices:
            raise ValueError("sbt runs on a k=N topology")
        if self.protocol == "batch" and self.topology.n_devices != 1:
            raise ValueError("batch runs on a single pooled device")
        for event in self.failures:
            if event.device >= self.topology.n_devices:
                raise ValueError(
                    f"failure schedule names device {event.device}, "
                    f"topology has {self.topology.n_devices}"
                )


def _check_finite(loss: float, epoch: int) -> float:
    if not math.isfinite(loss):
        raise DivergenceError(epoch, loss)
    return loss


def run_training(setup: RunSetup) -> RunTrace:
    """Run the configured protocol for the requested epochs and record a
    complete per-epoch trace. Deterministic: identical setups produce
    identical traces."""
    topo = setup.topology
    cfg = setup.round_cfg
    size_bytes = model_size_bytes(setup.init.arch)
    params = setup.init
    feats = setup.device_features

    mode = "collaborative"  # or "isolated" / "halted"
    solo_params: Dict[int, ParamVector] = {}

    def live_loss_collaborative(theta: ParamVector, devices: Sequence[int]) -> float | None:
        rows = [feats[d] for d in devices if feats[d].shape[0] > 0]
        if not rows:
            return None
        return batch_loss(theta, np.vstack(rows))

    last_loss = live_loss_collaborative(params, range(topo.n_devices))

    records: List[EpochRecord] = []
    for epoch in range(1, setup.epochs + 1):
        topo, warnings = inject_failures(topo, setup.failures, epoch)

        # react to critical failures
        if mode != "halted":
            if setup.protocol == "batch" and not topo.is_live(0):
                mode = "halted"
            elif setup.protocol == "fl" and not topo.is_live(topo.head_of_cluster[0]):
                if mode == "collaborative" and setup.policy.fl_server_down == "local-training":
                    mode = "isolated"
                    solo_params = {d: params for d in topo.live_devices()}
                elif mode == "collaborative":
                    mode = "halted"

        if mode == "halted":
            records.append(
                EpochRecord(
                    epoch=epoch,
                    live=topo.live_devices(),
                    participants=(),
                    n_train_samples=0,
                    train_loss=last_loss,  # plateau at the last pre-failure value
                    comms=CommsReport(model_size_bytes=size_bytes),
                    virtual_time=0.0,
                    noop=True,
                    warnings=warnings,
                )
            )
            continue

        if mode == "isolated":
            solo_params = {d: p for d, p in solo_params.items() if topo.is_live(d)}
            losses: List[Tuple[int, float]] = []
            for d in sorted(solo_params):
                upd = local_gradient(feats[d], solo_params[d], cfg, device_id=d, epoch=epoch)
                if upd.n > 0:
                    solo_params[d] = apply_update(solo_params[d], upd.g, cfg.alpha)
                    losses.append((upd.n, batch_loss(solo_params[d], feats[d])))
            n_samples = sum(n for n, _ in losses)
            if losses:
                last_loss = _check_finite(
                    sum(n * l for n, l in losses) / n_samples, epoch
                )
            compute = max((feats[d].shape[0] for d in solo_params), default=0)
            records.append(
                EpochRecord(
                    epoch=epoch,
                    live=topo.live_devices(),
                    participants=tuple(sorted(solo_params)),
                    n_train_samples=n_samples,
                    train_loss=last_loss,
                    comms=CommsReport(model_size_bytes=size_bytes),  # no aggregation traffic
                    virtual_time=compute * setup.per_grad_cost,
                    noop=not losses,
                    warnings=warnings,
                )
            )
            continue

        # collaborative round (batch, fl, sbt, tolfl before any critical loss)
        participants = topo.participants()
        n_samples = sum(feats[d].shape[0] for d in participants)
        if n_samples > 0:
            clusters = [
                [(d, feats[d]) for d in topo.members_of(c)]
                for c in topo.live_head_clusters()
            ]
            params = tolfl_round(clusters, params, cfg, epoch=epoch)
            loss = live_loss_collaborative(params, participants)
            if loss is not None:
                last_loss = _check_finite(loss, epoch)
            noop = False
        else:
            noop = True
        records.append(
            EpochRecord(
                epoch=epoch,
                live=topo.live_devices(),
                participants=participants,
                n_train_samples=n_samples,
                train_loss=last_loss,
                comms=account_round(topo, setup.protocol, size_bytes)
                if not noop
                else CommsReport(model_size_bytes=size_bytes),
                virtual_time=virtual_time(
                    topo,
                    setup.protocol,
                    [f.shape[0] for f in feats],
                    setup.per_grad_cost,
                    setup.per_msg_cost,
                )
                if not noop
                else 0.0,
                noop=noop,
                warnings=warnings,
            )
        )

    # final model groups
    if mode == "isolated":
        groups = tuple(
            GroupResult((d,), int(feats[d].shape[0]), solo_params[d])
            for d in sorted(solo_params)
        )
    else:
        devices = topo.participants() if mode == "collaborative" else topo.live_devices()
        groups = (
            GroupResult(devices, int(sum(feats[d].shape[0] for d in devices)), params),
        )

    return RunTrace(
        protocol=setup.protocol,
        n_devices=topo.n_devices,
        k=topo.k,
        epochs_requested=setup.epochs,
        seed=setup.seed,
        config_hash=setup.config_hash,
        records=tuple(records),
        groups=groups,
    )
