"""Evaluation: AUROC over anomaly scores, scenario mixing, summary statistics.

AUROC is computed from exact rank statistics (ties get half credit), so it
agrees bit for bit with the naive all-pairs count while staying O(n log n).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .model import ParamVector, anomaly_scores

PROB_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ScoreSet:
    """Anomaly scores of the two labelled test pools."""

    normal: np.ndarray
    anomalous: np.ndarray

    def __post_init__(self) -> None:
        norm = np.asarray(self.normal, dtype=np.float64).ravel()
        anom = np.asarray(self.anomalous, dtype=np.float64).ravel()
        if norm.size == 0 or anom.size == 0:
            raise ValueError("both score pools must be non-empty")
        object.__setattr__(self, "normal", norm)
        object.__setattr__(self, "anomalous", anom)


def auroc(scores: ScoreSet) -> float:
    """Probability that a random anomalous score exceeds a random normal one,
    counting ties as 1/2: the Mann-Whitney statistic over average ranks."""
    normal, anom = scores.normal, scores.anomalous
    n0, n1 = normal.size, anom.size
    combined = np.concatenate([normal, anom])
    # average rank of value v: (#strictly smaller) + (multiplicity + 1) / 2
    _, inverse, counts = np.unique(combined, return_inverse=True, return_counts=True)
    below = np.concatenate([[0], np.cumsum(counts)[:-1]])
    avg_rank = below + (counts + 1) / 2.0
    ranks = avg_rank[inverse]
    u = ranks[n0:].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n0 * n1))


def score_model(params: ParamVector, test_normal, test_anomalous) -> ScoreSet:
    """Score both test pools with the model's reconstruction error.

    Accepts plain feature matrices or datasets exposing ``.features``.
    """
    normal = getattr(test_normal, "features", test_normal)
    anom = getattr(test_anomalous, "features", test_anomalous)
    return ScoreSet(anomaly_scores(params, normal), anomaly_scores(params, anom))


@dataclass(frozen=True)
class ScenarioOutcome:
    """One failure scenario: its probability and the metric measured under it."""

    probability: float
    value: float

    def __post_init__(self) -> None:
        if self.probability < 0.0:
            raise ValueError(f"probability must be >= 0, got {self.probability}")


def expected_performance(outcomes: Sequence[ScenarioOutcome | Tuple[float, float]]) -> float:
    """Probability-weighted mean over failure scenarios. The probabilities
    must sum to 1 within 1e-9."""
    pairs = [o if isinstance(o, ScenarioOutcome) else ScenarioOutcome(*o) for o in outcomes]
    if not pairs:
        raise ValueError("at least one scenario is required")
    total = sum(o.probability for o in pairs)
    if abs(total - 1.0) > PROB_TOLERANCE:
        raise ValueError(f"scenario probabilities sum to {total}, expected 1")
    return float(sum(o.probability * o.value for o in pairs))


@dataclass(frozen=True)
class SummaryRow:
    """One row of a results table: label, mean, sample std, run count."""

    label: str
    mean: float
    std: float
    runs: int


def summarize(values: Sequence[float], label: str) -> SummaryRow:
    """Mean and sample standard deviation (ddof = 1; zero for a single run)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot summarise zero values")
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return SummaryRow(label, float(np.mean(arr)), std, int(arr.size))
