"""k-NN exploratory baselines over raw lat/lon degrees and scaled month/hour, plus the prior."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, SampleRecord
from .evaluation import topk_accuracy
from .model import AttributePrediction

DEFAULT_SCALE_GRID = (0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0)


@dataclass(frozen=True)
class KnnConfig:
    k: int = 30
    features: tuple[str, ...] = ("time", "loc")
    time_scales: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self) -> None:
        feats = tuple(f for f in ("time", "loc") if f in self.features)
        if not feats or len(set(self.features) - {"time", "loc"}) > 0:
            raise ValueError(f"features must be a nonempty subset of {{time, loc}}, got {self.features}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "time_scales", tuple(float(s) for s in self.time_scales))


def knn_features(latlon: np.ndarray, month_hour: np.ndarray, config: KnnConfig) -> np.ndarray:
    parts = []
    if "loc" in config.features:
        parts.append(latlon)
    if "time" in config.features:
        parts.append(month_hour * np.asarray(config.time_scales))
    return np.hstack(parts)


def _features(dataset: Dataset, config: KnnConfig) -> np.ndarray:
    return knn_features(dataset.latlon(), dataset.month_hour(), config)


def squared_distances(train_feats: np.ndarray, query: np.ndarray) -> np.ndarray:
    # Column-by-column accumulation keeps the summation order fixed.
    d = np.zeros(train_feats.shape[0])
    for j in range(train_feats.shape[1]):
        d += (train_feats[:, j] - query[j]) ** 2
    return d


def neighbor_indices(train_feats: np.ndarray, query: np.ndarray, k: int) -> np.ndarray:
    """The ``k`` nearest rows, ordered by distance then by index."""
    return np.argsort(squared_distances(train_feats, query), kind="stable")[:k]


def mean_targets(places: np.ndarray, transient: np.ndarray, indices) -> AttributePrediction:
    """Mean of the selected rows, summed in ascending index order."""
    idx = np.sort(np.asarray(indices))
    p = places[idx].mean(axis=0)
    return AttributePrediction(p / p.sum(), transient[idx].mean(axis=0))


def _check(train_set: Dataset, config: KnnConfig) -> None:
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    if config.k > len(train_set):
        raise ValueError(f"k={config.k} exceeds training set size {len(train_set)}")


def knn_predict(train_set: Dataset, query: SampleRecord, config: KnnConfig) -> AttributePrediction:
    _check(train_set, config)
    q = knn_features(
        np.array([[query.location.lat_deg, query.location.lon_deg]]),
        np.array([[query.time.month, query.time.hour]], dtype=float),
        config,
    )[0]
    idx = neighbor_indices(_features(train_set, config), q, config.k)
    return mean_targets(train_set.places_matrix(), train_set.transient_matrix(), idx)


def knn_predict_dataset(train_set: Dataset, queries: Dataset, config: KnnConfig) -> tuple[np.ndarray, np.ndarray]:
    """Predictions for every query record, stacked as (places, transient) arrays."""
    _check(train_set, config)
    feats = _features(train_set, config)
    qfeats = _features(queries, config)
    places, transient = train_set.places_matrix(), train_set.transient_matrix()
    out_p = np.zeros((len(queries), train_set.dims.places))
    out_t = np.zeros((len(queries), train_set.dims.transient))
    for i, q in enumerate(qfeats):
        pred = mean_targets(places, transient, neighbor_indices(feats, q, config.k))
        out_p[i], out_t[i] = pred.places, pred.transient
    return out_p, out_t


def prior_baseline(train_set: Dataset) -> AttributePrediction:
    """Training-set mean targets, used as a constant prediction."""
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    return mean_targets(train_set.places_matrix(), train_set.transient_matrix(), np.arange(len(train_set)))


def grid_search_time_scale(
    train_set: Dataset,
    validation_set: Dataset,
    candidate_scales=DEFAULT_SCALE_GRID,
    config: KnnConfig = KnnConfig(),
) -> tuple[float, float]:
    """Best (month, hour) scale pair by validation Places Top-1.

    Ties keep the earlier pair in ascending (month scale, hour scale) order.
    """
    scales = sorted(float(s) for s in candidate_scales)
    if not scales or len(validation_set) == 0:
        raise ValueError("need candidate scales and a nonempty validation set")
    truth = validation_set.places_matrix()
    best, best_acc = None, -1.0
    for sm, sh in itertools.product(scales, scales):
        cfg = KnnConfig(config.k, config.features, (sm, sh))
        pred, _ = knn_predict_dataset(train_set, validation_set, cfg)
        acc = topk_accuracy(pred, truth, 1)
        if acc > best_acc:
            best, best_acc = (sm, sh), acc
    return best
