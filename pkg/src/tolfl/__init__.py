"""Failure-tolerant distributed training simulator for autoencoder anomaly detection.

Four training protocols over one model core:

* ``batch``: centralised gradient descent on the pooled data,
* ``fl``: star-topology federated averaging with a single server,
* ``sbt``: flat sequential round-robin aggregation over all devices,
* ``tolfl``: federated averaging inside k clusters whose heads then merge
  sequentially; k = 1 recovers fl and k = N recovers sbt.

The package adds deterministic failure injection, per-round communication and
virtual-time accounting, AUROC evaluation, a FastAPI service, and a thin CLI.
"""

__version__ = "0.1.0"
