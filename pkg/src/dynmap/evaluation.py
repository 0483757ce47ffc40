"""Accuracy metrics and the KL / L2 / Combine distance calculus."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .neuralnet import KL_EPS

DEFAULT_LAMBDA = 0.58


@dataclass(frozen=True)
class CombineConfig:
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")


@dataclass(frozen=True, eq=False)
class DistanceProfile:
    """Per-candidate distances; ``combine`` is relative to this candidate set."""

    kl_places: np.ndarray
    l2_transient: np.ndarray
    combine: np.ndarray


def _as_2d(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a list of vectors")
    return arr


def topk_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries per row; ties go to the lower index."""
    return np.argsort(-scores, axis=-1, kind="stable")[..., :k]


def topk_accuracy(predictions, targets, k: int) -> float:
    """Fraction of rows whose target argmax is among the ``k`` largest predicted entries."""
    pred = _as_2d(predictions, "predictions")
    targ = _as_2d(targets, "targets")
    if pred.shape != targ.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {targ.shape}")
    if not 1 <= k <= pred.shape[1]:
        raise ValueError(f"k={k} outside [1, {pred.shape[1]}]")
    if pred.shape[0] == 0:
        raise ValueError("no predictions to score")
    truth = np.argmax(targ, axis=1)
    hits = np.any(topk_indices(pred, k) == truth[:, None], axis=1)
    return float(np.mean(hits))


def within_threshold_matrix(predictions, targets, tau: float) -> np.ndarray:
    pred = _as_2d(predictions, "predictions")
    targ = _as_2d(targets, "targets")
    if pred.shape != targ.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {targ.shape}")
    if tau <= 0:
        raise ValueError("tau must be positive")
    return np.abs(pred - targ) <= tau


def within_threshold(predictions, targets, tau: float) -> float:
    """Pooled fraction of (sample, attribute) pairs with ``|pred - target| <= tau``."""
    hits = within_threshold_matrix(predictions, targets, tau)
    if hits.size == 0:
        raise ValueError("no predictions to score")
    return float(np.mean(hits))


def within_threshold_per_attribute(predictions, targets, tau: float) -> np.ndarray:
    return np.mean(within_threshold_matrix(predictions, targets, tau), axis=0)


def kl_divergence(p, q) -> np.ndarray:
    """KL(p || q) along the last axis, with the same epsilon as the training loss."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return np.sum(p * (np.log(p + KL_EPS) - np.log(q + KL_EPS)), axis=-1)


def attribute_distance(query, candidate) -> tuple[float, float]:
    """``(KL(query.places || candidate.places), ||query.transient - candidate.transient||)``."""
    if np.shape(query.places) != np.shape(candidate.places) or np.shape(query.transient) != np.shape(candidate.transient):
        raise ValueError("query and candidate attribute dimensions differ")
    kl = float(kl_divergence(query.places, candidate.places))
    l2 = float(np.linalg.norm(np.asarray(query.transient) - np.asarray(candidate.transient)))
    return kl, l2


def attribute_distances(query_places, query_transient, cand_places, cand_transient) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``attribute_distance`` of one query against many candidates (rows)."""
    cand_places = _as_2d(cand_places, "candidate places")
    cand_transient = _as_2d(cand_transient, "candidate transient")
    qp = np.asarray(query_places, dtype=float)
    qt = np.asarray(query_transient, dtype=float)
    if cand_places.shape[1:] != qp.shape or cand_transient.shape[1:] != qt.shape:
        raise ValueError("query and candidate attribute dimensions differ")
    kl = kl_divergence(qp[None, :], cand_places)
    l2 = np.linalg.norm(cand_transient - qt[None, :], axis=1)
    return kl, l2


def _minmax(col: np.ndarray) -> np.ndarray:
    lo, hi = col.min(), col.max()
    if hi == lo:
        return np.zeros_like(col)
    return (col - lo) / (hi - lo)


def combine_distances(profiles, config: CombineConfig = CombineConfig()) -> np.ndarray:
    """Min-max normalize each distance over the candidate set, then weight by lambda."""
    arr = np.asarray(profiles, dtype=float)
    if arr.size == 0:
        raise ValueError("empty candidate set")
    arr = arr.reshape(-1, 2)
    return config.lam * _minmax(arr[:, 0]) + (1.0 - config.lam) * _minmax(arr[:, 1])


def distance_profile(kl: np.ndarray, l2: np.ndarray, config: CombineConfig = CombineConfig()) -> DistanceProfile:
    kl = np.asarray(kl, dtype=float)
    l2 = np.asarray(l2, dtype=float)
    return DistanceProfile(kl, l2, combine_distances(np.column_stack([kl, l2]), config))


def rank_candidates(scores) -> np.ndarray:
    """Stable ascending argsort."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("no scores to rank")
    if np.any(np.isnan(scores)):
        raise ValueError("NaN score")
    return np.argsort(scores, kind="stable")


def rank_of(order: np.ndarray, index: int) -> int:
    return int(np.flatnonzero(order == index)[0])


def topk_percent_budget(n_candidates: int, k_percent: float) -> int:
    """``ceil(n * k / 100)`` evaluated exactly on the decimal value of ``k``."""
    return math.ceil(n_candidates * Fraction(str(k_percent)) / 100)


def topk_percent_hit(rank_of_truth: int, n_candidates: int, k_percent: float) -> bool:
    if not 0 <= rank_of_truth < n_candidates:
        raise ValueError(f"rank {rank_of_truth} outside [0, {n_candidates})")
    if k_percent <= 0:
        raise ValueError("k_percent must be positive")
    return rank_of_truth + 1 <= topk_percent_budget(n_candidates, k_percent)


def evaluate_predictions(places_pred, transient_pred, places_true, transient_true) -> dict[str, float]:
    return {
        "top1": topk_accuracy(places_pred, places_true, 1),
        "top5": topk_accuracy(places_pred, places_true, min(5, np.shape(places_true)[-1])),
        "within0.1": within_threshold(transient_pred, transient_true, 0.1),
        "within0.2": within_threshold(transient_pred, transient_true, 0.2),
    }


def metrics_csv(rows) -> str:
    """CSV text with a ``model,metric,value`` header; ``rows`` yields such triples."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "metric", "value"])
    for model, metric, value in rows:
        writer.writerow([model, metric, repr(float(value))])
    return buf.getvalue()
