"""Sample records, the JSON Lines dataset format, and train/test splitting.

File layout (UTF-8, LF line endings)::

    {"dims": {"overhead": D, "places": P, "transient": A}}
    {"id": "...", "lat": .., "lon": .., "month": .., "hour": .., "overhead": [...], "places": [...], "transient": [...]}
    ...

Floats are written with ``repr`` precision, so ``load(save(d))`` is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PLACES_TOLERANCE = 1e-5
# A places vector is left untouched when its sum is this close to one. This
# keeps renormalization idempotent, which exact round-trips depend on.
_RENORMALIZE_SLACK = 1e-12


class DatasetError(ValueError):
    """Base class for every validation failure raised by this module."""


class DatasetFormatError(DatasetError):
    """Unparseable JSON or a structurally wrong manifest/record."""


class DimensionError(DatasetError):
    """A vector length disagrees with the manifest."""


class NormalizationError(DatasetError):
    """A places vector is negative or does not sum to one."""


class RangeError(DatasetError):
    """A scalar field lies outside its valid range."""


@dataclass(frozen=True)
class GeoLocation:
    lat_deg: float
    lon_deg: float

    def __post_init__(self) -> None:
        lat, lon = float(self.lat_deg), float(self.lon_deg)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise RangeError(f"non-finite location ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise RangeError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise RangeError(f"longitude {lon} outside (-180, 180]")
        if lon == -180.0:
            lon = 180.0
        object.__setattr__(self, "lat_deg", lat)
        object.__setattr__(self, "lon_deg", lon)


@dataclass(frozen=True)
class TimeOfCapture:
    month: int
    hour: int

    def __post_init__(self) -> None:
        for name, lo, hi in (("month", 1, 12), ("hour", 0, 23)):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise RangeError(f"{name} must be an integer, got {value!r}")
            if not lo <= value <= hi:
                raise RangeError(f"{name} {value} outside [{lo}, {hi}]")
            object.__setattr__(self, name, int(value))


@dataclass(frozen=True)
class Dims:
    """Vector lengths: overhead feature D, places classes P, transient attributes A."""

    overhead: int = 2048
    places: int = 365
    transient: int = 40

    def __post_init__(self) -> None:
        for name in ("overhead", "places", "transient"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise DatasetFormatError(f"dimension {name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    def as_dict(self) -> dict[str, int]:
        return {"overhead": self.overhead, "places": self.places, "transient": self.transient}


@dataclass(frozen=True, eq=False)
class AttributeTargets:
    """Places distribution plus transient attribute vector."""

    places: np.ndarray
    transient: np.ndarray

    def __post_init__(self) -> None:
        places = _as_vector(self.places, "places")
        transient = _as_vector(self.transient, "transient")
        if np.any(places < 0):
            raise NormalizationError("places entries must be non-negative")
        total = float(places.sum())
        if abs(total - 1.0) > PLACES_TOLERANCE:
            raise NormalizationError(f"places sums to {total!r}, not 1")
        if abs(total - 1.0) > _RENORMALIZE_SLACK:
            places = places / total
        if np.any((transient < 0) | (transient > 1)):
            raise RangeError("transient entries must lie in [0, 1]")
        places.setflags(write=False)
        transient.setflags(write=False)
        object.__setattr__(self, "places", places)
        object.__setattr__(self, "transient", transient)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AttributeTargets):
            return NotImplemented
        return np.array_equal(self.places, other.places) and np.array_equal(self.transient, other.transient)


@dataclass(frozen=True, eq=False)
class SampleRecord:
    id: str
    location: GeoLocation
    time: TimeOfCapture
    overhead: np.ndarray
    targets: AttributeTargets

    def __post_init__(self) -> None:
        overhead = _as_vector(self.overhead, "overhead")
        overhead.setflags(write=False)
        object.__setattr__(self, "overhead", overhead)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SampleRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.location == other.location
            and self.time == other.time
            and np.array_equal(self.overhead, other.overhead)
            and self.targets == other.targets
        )


@dataclass(frozen=True)
class Dataset:
    dims: Dims
    records: tuple[SampleRecord, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        records = tuple(self.records)
        seen: set[str] = set()
        for rec in records:
            _check_dims(rec, self.dims)
            if rec.id in seen:
                raise DatasetFormatError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
        object.__setattr__(self, "records", records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, index: int) -> SampleRecord:
        return self.records[index]

    def subset(self, indices) -> Dataset:
        return Dataset(self.dims, tuple(self.records[int(i)] for i in indices))

    # Stacked views used by the vectorized code paths.
    def overhead_matrix(self) -> np.ndarray:
        return _stack([r.overhead for r in self.records], self.dims.overhead)

    def places_matrix(self) -> np.ndarray:
        return _stack([r.targets.places for r in self.records], self.dims.places)

    def transient_matrix(self) -> np.ndarray:
        return _stack([r.targets.transient for r in self.records], self.dims.transient)

    def latlon(self) -> np.ndarray:
        return np.array([[r.location.lat_deg, r.location.lon_deg] for r in self.records], dtype=float).reshape(-1, 2)

    def month_hour(self) -> np.ndarray:
        return np.array([[r.time.month, r.time.hour] for r in self.records], dtype=float).reshape(-1, 2)


def _stack(rows: list[np.ndarray], width: int) -> np.ndarray:
    if not rows:
        return np.zeros((0, width))
    return np.vstack(rows)


def _as_vector(values, name: str) -> np.ndarray:
    try:
        arr = np.array(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{name} must be a list of numbers") from exc
    if arr.ndim != 1:
        raise DatasetFormatError(f"{name} must be a flat vector")
    if not np.all(np.isfinite(arr)):
        raise RangeError(f"{name} contains non-finite values")
    return arr


def _check_dims(rec: SampleRecord, dims: Dims) -> None:
    for name, got, want in (
        ("overhead", rec.overhead.size, dims.overhead),
        ("places", rec.targets.places.size, dims.places),
        ("transient", rec.targets.transient.size, dims.transient),
    ):
        if got != want:
            raise DimensionError(f"record {rec.id!r}: {name} has length {got}, manifest says {want}")


def make_record(
    id: str,
    lat: float,
    lon: float,
    month: int,
    hour: int,
    overhead,
    places,
    transient,
) -> SampleRecord:
    """Build a validated record from plain values."""
    return SampleRecord(
        id=str(id),
        location=GeoLocation(lat, lon),
        time=TimeOfCapture(month, hour),
        overhead=np.asarray(overhead, dtype=float),
        targets=AttributeTargets(np.asarray(places, dtype=float), np.asarray(transient, dtype=float)),
    )


_RECORD_KEYS = ("id", "lat", "lon", "month", "hour", "overhead", "places", "transient")


def _parse_manifest(obj) -> Dims:
    if not isinstance(obj, dict) or not isinstance(obj.get("dims"), dict):
        raise DatasetFormatError('line 1: manifest must be an object with a "dims" object')
    d = obj["dims"]
    missing = [k for k in ("overhead", "places", "transient") if k not in d]
    if missing:
        raise DatasetFormatError(f"line 1: manifest dims missing {missing}")
    try:
        return Dims(d["overhead"], d["places"], d["transient"])
    except DatasetError as exc:
        raise DatasetFormatError(f"line 1: {exc}") from exc


def _parse_record(obj, dims: Dims, lineno: int) -> SampleRecord:
    if not isinstance(obj, dict):
        raise DatasetFormatError(f"line {lineno}: record must be a JSON object")
    missing = [k for k in _RECORD_KEYS if k not in obj]
    if missing:
        raise DatasetFormatError(f"line {lineno}: record missing keys {missing}")
    rid = obj["id"]
    if not isinstance(rid, str):
        raise DatasetFormatError(f"line {lineno}: id must be a string")
    for key in ("lat", "lon"):
        if isinstance(obj[key], bool) or not isinstance(obj[key], (int, float)):
            raise DatasetFormatError(f"line {lineno}: {key} must be a number")
    for key in ("overhead", "places", "transient"):
        vec = obj[key]
        if not isinstance(vec, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in vec):
            raise DatasetFormatError(f"line {lineno}: {key} must be a list of numbers")
    try:
        rec = make_record(rid, obj["lat"], obj["lon"], obj["month"], obj["hour"],
                          obj["overhead"], obj["places"], obj["transient"])
        _check_dims(rec, dims)
    except DatasetError as exc:
        raise type(exc)(f"line {lineno}, record {rid!r}: {exc}") from exc
    return rec


def loads_dataset(text: str) -> Dataset:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError("empty file: a manifest line is required")
    records: list[SampleRecord] = []
    dims: Dims | None = None
    for lineno, line in enumerate(lines, start=1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
        if dims is None:
            dims = _parse_manifest(obj)
        else:
            records.append(_parse_record(obj, dims, lineno))
    return Dataset(dims, tuple(records))


def load_dataset(path) -> Dataset:
    """Read and fully validate a dataset file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DatasetFormatError(f"{path}: not valid UTF-8") from exc
    return loads_dataset(text)


def dumps_dataset(dataset: Dataset) -> str:
    out = [json.dumps({"dims": dataset.dims.as_dict()})]
    for r in dataset.records:
        out.append(json.dumps({
            "id": r.id,
            "lat": r.location.lat_deg,
            "lon": r.location.lon_deg,
            "month": r.time.month,
            "hour": r.time.hour,
            "overhead": r.overhead.tolist(),
            "places": r.targets.places.tolist(),
            "transient": r.targets.transient.tolist(),
        }))
    return "\n".join(out) + "\n"


def save_dataset(dataset: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(dataset), encoding="utf-8", newline="\n")


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random partition of ``range(n)``; both index arrays come back sorted."""
    if n < 2:
        raise ValueError(f"need at least 2 records to split, got {n}")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = int(math.floor(test_fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def split_dataset(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Split into (train, test) with ``round(test_fraction * N)`` test records.

    Record order inside each part follows the input order.
    """
    train_idx, test_idx = split_indices(len(dataset), test_fraction, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)
