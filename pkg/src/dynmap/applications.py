"""Localization, capture-time verification, retrieval, and attribute map rendering.

All three ranking pipelines reduce to the same steps: predict attributes for
each candidate, measure KL / L2 against the query, min-max combine with
lambda, and sort ascending.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import AttributeTargets, Dataset, DatasetError, DatasetFormatError, GeoLocation, TimeOfCapture
from .encoding import encode_location_arrays, encode_time_arrays
from .evaluation import (
    DEFAULT_LAMBDA,
    CombineConfig,
    DistanceProfile,
    attribute_distances,
    distance_profile,
    kl_divergence,
    rank_candidates,
    rank_of,
)
from .model import AttributePrediction, DynamicMapModel, predict_arrays

N_MONTHS, N_HOURS = 12, 24


@dataclass(frozen=True)
class AttributeSelector:
    kind: str  # "transient" or "places"
    index: int

    @classmethod
    def parse(cls, text: str) -> AttributeSelector:
        kind, _, idx = text.partition(":")
        if kind not in ("transient", "places") or not idx.strip().lstrip("-").isdigit():
            raise ValueError(f"attribute must look like transient:IDX or places:IDX, got {text!r}")
        return cls(kind, int(idx))

    def check(self, model: DynamicMapModel) -> None:
        dims = model.config.dims
        size = dims.transient if self.kind == "transient" else dims.places
        if not 0 <= self.index < size:
            raise IndexError(f"{self.kind} index {self.index} outside [0, {size})")

    def pick(self, places: np.ndarray, transient: np.ndarray) -> np.ndarray:
        src = transient if self.kind == "transient" else places
        return src[..., self.index]


@dataclass(frozen=True, eq=False)
class RankedCandidates:
    order: np.ndarray
    profile: DistanceProfile

    def rank_of(self, index: int) -> int:
        return rank_of(self.order, index)


@dataclass(frozen=True, eq=False)
class VerificationGrid:
    """Distances over every (month, hour); row ``m - 1``, column ``h``."""

    distances: np.ndarray  # combine, (12, 24)
    kl: np.ndarray
    l2: np.ndarray
    truth: TimeOfCapture | None
    rank_of_truth: int | None

    def rank(self, kind: str = "combine", truth: TimeOfCapture | None = None) -> int:
        truth = truth or self.truth
        if truth is None:
            raise ValueError("no true time given")
        grid = {"combine": self.distances, "places": self.kl, "transient": self.l2}[kind]
        order = rank_candidates(grid.ravel())
        return rank_of(order, grid_index(truth))


@dataclass(frozen=True)
class MapGridRequest:
    cells: Sequence[tuple[GeoLocation, np.ndarray]]
    time: TimeOfCapture
    attribute: AttributeSelector
    shape: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if len(self.cells) == 0:
            raise ValueError("map request has no cells")
        if self.shape is not None and self.shape[0] * self.shape[1] != len(self.cells):
            raise ValueError(f"grid shape {self.shape} does not hold {len(self.cells)} cells")


def grid_index(time: TimeOfCapture) -> int:
    return (time.month - 1) * N_HOURS + time.hour


def _candidate_arrays(candidates) -> tuple[np.ndarray, np.ndarray]:
    if len(candidates) == 0:
        raise ValueError("no candidates")
    latlon = np.array([[loc.lat_deg, loc.lon_deg] for loc, _ in candidates], dtype=float)
    overhead = np.vstack([np.asarray(o, dtype=float) for _, o in candidates])
    return encode_location_arrays(latlon[:, 0], latlon[:, 1]), overhead


def _rank(query: AttributeTargets, places, transient, lam: float) -> RankedCandidates:
    kl, l2 = attribute_distances(query.places, query.transient, places, transient)
    profile = distance_profile(kl, l2, CombineConfig(lam))
    return RankedCandidates(rank_candidates(profile.combine), profile)


def localize(
    query: AttributeTargets,
    time: TimeOfCapture,
    candidates: Sequence[tuple[GeoLocation, np.ndarray]],
    model: DynamicMapModel,
    lam: float = DEFAULT_LAMBDA,
) -> RankedCandidates:
    """Rank candidate (location, overhead) pairs by how well they explain the query.

    Each candidate is predicted at the query's capture time.
    """
    loc_vec, overhead = _candidate_arrays(candidates)
    time_vec = np.repeat(encode_time(time)[None, :], len(candidates), axis=0)
    places, transient = predict_arrays(model, time_vec, loc_vec, overhead)
    return _rank(query, places, transient, lam)


def encode_time(time: TimeOfCapture) -> np.ndarray:
    return encode_time_arrays(time.month, time.hour)


def _all_times() -> tuple[np.ndarray, np.ndarray]:
    month, hour = np.meshgrid(np.arange(1, N_MONTHS + 1), np.arange(N_HOURS), indexing="ij")
    return month.ravel(), hour.ravel()


def predict_time_grid(model: DynamicMapModel, location: GeoLocation, overhead) -> tuple[np.ndarray, np.ndarray]:
    """Predictions at all 288 (month, hour) pairs in month-major order."""
    month, hour = _all_times()
    n = month.size
    time_vec = encode_time_arrays(month, hour)
    loc_vec = np.repeat(encode_location_arrays(location.lat_deg, location.lon_deg)[None, :], n, axis=0)
    over = np.repeat(np.asarray(overhead, dtype=float)[None, :], n, axis=0)
    return predict_arrays(model, time_vec, loc_vec, over)


def verify_time(
    query: AttributeTargets,
    location: GeoLocation,
    overhead,
    model: DynamicMapModel,
    lam: float = DEFAULT_LAMBDA,
    truth: TimeOfCapture | None = None,
) -> VerificationGrid:
    places, transient = predict_time_grid(model, location, overhead)
    ranked = _rank(query, places, transient, lam)
    shape = (N_MONTHS, N_HOURS)
    rank = ranked.rank_of(grid_index(truth)) if truth is not None else None
    p = ranked.profile
    return VerificationGrid(p.combine.reshape(shape), p.kl_places.reshape(shape), p.l2_transient.reshape(shape), truth, rank)


@dataclass(frozen=True, eq=False)
class RetrievalResult:
    ids: list[str]
    scores: np.ndarray  # combine score of each returned id
    prediction: AttributePrediction


def retrieve(
    overhead,
    location: GeoLocation,
    time: TimeOfCapture,
    gallery: Dataset,
    model: DynamicMapModel,
    lam: float = DEFAULT_LAMBDA,
    n: int = 10,
) -> RetrievalResult:
    """Gallery records whose stored attributes lie closest to the predicted ones."""
    if len(gallery) == 0:
        raise ValueError("gallery is empty")
    if not 1 <= n <= len(gallery):
        raise ValueError(f"n={n} must lie in [1, {len(gallery)}]")
    places, transient = predict_arrays(
        model,
        encode_time(time)[None, :],
        encode_location_arrays(location.lat_deg, location.lon_deg)[None, :],
        np.asarray(overhead, dtype=float)[None, :],
    )
    pred = AttributePrediction(places[0], transient[0])
    gp, gt = gallery.places_matrix(), gallery.transient_matrix()
    kl = kl_divergence(gp, pred.places[None, :])
    l2 = np.linalg.norm(gt - pred.transient[None, :], axis=1)
    profile = distance_profile(kl, l2, CombineConfig(lam))
    order = rank_candidates(profile.combine)[:n]
    return RetrievalResult([gallery[int(i)].id for i in order], profile.combine[order], pred)


def to_gray(values: np.ndarray) -> np.ndarray:
    """8-bit gray levels over the value range; a constant field maps to 0."""
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.floor(255.0 * (v - lo) / (hi - lo) + 0.5).astype(np.uint8)


def write_pgm(path, gray: np.ndarray) -> None:
    """Binary (P5) 8-bit PGM of a 2-D array."""
    gray = np.asarray(gray, dtype=np.uint8)
    rows, cols = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM is supported")
    pixels = parts[4] if len(parts) > 4 else b""
    return np.frombuffer(pixels[: rows * cols], dtype=np.uint8).reshape(rows, cols)


def render_attribute_map(
    request: MapGridRequest,
    model: DynamicMapModel,
    csv_path=None,
    pgm_path=None,
) -> np.ndarray:
    """One attribute value per cell at the requested time; optionally written to CSV/PGM."""
    request.attribute.check(model)
    loc_vec, overhead = _candidate_arrays(request.cells)
    time_vec = np.repeat(encode_time(request.time)[None, :], len(request.cells), axis=0)
    places, transient = predict_arrays(model, time_vec, loc_vec, overhead)
    values = request.attribute.pick(places, transient)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["lat", "lon", "value"])
            for (loc, _), v in zip(request.cells, values):
                writer.writerow([repr(loc.lat_deg), repr(loc.lon_deg), repr(float(v))])
    if pgm_path is not None:
        shape = request.shape or (1, len(request.cells))
        write_pgm(pgm_path, to_gray(values).reshape(shape))
    return values


def attribute_timeseries(location: GeoLocation, overhead, model: DynamicMapModel, selector: AttributeSelector) -> np.ndarray:
    """12x24 grid of the selected attribute over month (rows) and hour (columns)."""
    selector.check(model)
    places, transient = predict_time_grid(model, location, overhead)
    return selector.pick(places, transient).reshape(N_MONTHS, N_HOURS)


def write_month_hour_csv(path, grid: np.ndarray, column: str = "value") -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["month", "hour", column])
        for m in range(N_MONTHS):
            for h in range(N_HOURS):
                writer.writerow([m + 1, h, repr(float(grid[m, h]))])


# Map cell files: a JSON header line {"dims": {"overhead": D}, "shape": [rows, cols]}
# followed by one {"lat": .., "lon": .., "overhead": [...]} object per cell, row-major.

def save_cells(path, cells: Sequence[tuple[GeoLocation, np.ndarray]], shape: tuple[int, int] | None = None) -> None:
    d = len(cells[0][1]) if cells else 0
    header = {"dims": {"overhead": d}}
    if shape is not None:
        header["shape"] = list(shape)
    lines = [json.dumps(header)]
    for loc, over in cells:
        lines.append(json.dumps({"lat": loc.lat_deg, "lon": loc.lon_deg, "overhead": np.asarray(over, dtype=float).tolist()}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cells(path) -> tuple[list[tuple[GeoLocation, np.ndarray]], tuple[int, int] | None]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"cells file not found: {path}")
    lines = [l for l in path.read_text(encoding="utf-8").split("\n") if l.strip()]
    if not lines:
        raise DatasetFormatError(f"{path}: empty cells file")
    try:
        rows = [json.loads(l) for l in lines]
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: malformed JSON ({exc.msg})") from exc
    header = rows[0]
    try:
        d = int(header["dims"]["overhead"])
        shape = tuple(int(x) for x in header["shape"]) if "shape" in header else None
        cells = []
        for i, row in enumerate(rows[1:], start=2):
            over = np.asarray(row["overhead"], dtype=float)
            if over.shape != (d,):
                raise DatasetFormatError(f"line {i}: overhead length {over.size} != {d}")
            cells.append((GeoLocation(row["lat"], row["lon"]), over))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetFormatError(f"{path}: bad cells file ({exc})") from exc
    return cells, shape
