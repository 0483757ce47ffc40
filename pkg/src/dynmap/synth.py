"""A synthetic world with a known conditional attribute distribution.

Layout
------
Latitudes [-60, 60] x longitudes [-180, 180] are cut into ``n_scene_cells``
rectangles (``rows x cols``, rows the divisor of n closest to sqrt(n/3)).
Each cell carries one scene class. Every class ``s`` has a latent vector
``z_s`` and every (class, transient attribute) pair a logit offset ``c_s``.

Observations
------------
* overhead  = M @ z_s + sigma * noise          (scene only, never time)
* places    = softmax(TAU * onehot(s) + sigma * noise)
* transient = logistic(f(month, hour, lat) + c_s + sigma * noise)

with, writing ``season = cos(2 pi (month - 1) / 12)``, ``day = cos(2 pi (hour - 12) / 24)``
and ``latn = lat / 60``::

    f_0 = (2.5 - 1.5 * season * latn) * day            daylight, peaks at noon
    f_1 = 3 * season * tanh(lat / 15)                    winter, Jan north / Jul south
    f_j = alpha_j cos(2 pi (hour - phi_j) / 24)
          + beta_j cos(2 pi (month - psi_j) / 12) * latn + gamma_j * latn     (j >= 2)

Longitude enters only through the scene class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import AttributeTargets, Dataset, Dims, GeoLocation, TimeOfCapture, make_record
from .neuralnet import sigmoid, softmax

TAU = 4.0
LATENT_DIM = 8
OFFSET_SCALE = 0.75
LAT_RANGE = (-60.0, 60.0)
LON_RANGE = (-180.0, 180.0)


@dataclass(frozen=True)
class WorldConfig:
    dims: Dims = field(default_factory=lambda: Dims(16, 10, 6))
    n_scene_cells: int = 64
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_scene_cells < 1:
            raise ValueError("n_scene_cells must be >= 1")
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ValueError("noise_sigma must be finite and >= 0")


@dataclass(frozen=True, eq=False)
class World:
    """Frozen world constants drawn from the config seed."""

    config: WorldConfig
    rows: int
    cols: int
    cell_class: np.ndarray  # (n_cells,)
    latents: np.ndarray  # (P, LATENT_DIM)
    mixing: np.ndarray  # (D, LATENT_DIM)
    offsets: np.ndarray  # (P, A)


def grid_shape(n_cells: int) -> tuple[int, int]:
    divisors = [r for r in range(1, n_cells + 1) if n_cells % r == 0]
    target = np.sqrt(n_cells / 3.0)
    rows = min(divisors, key=lambda r: (abs(r - target), r))
    return rows, n_cells // rows


def build_world(config: WorldConfig) -> World:
    dims = config.dims
    n = config.n_scene_cells
    rng = np.random.default_rng([config.seed, 0])
    if n >= dims.places:
        cell_class = rng.permutation(np.arange(n) % dims.places)
    else:
        cell_class = rng.choice(dims.places, size=n, replace=False)
    latents = rng.normal(size=(dims.places, LATENT_DIM))
    mixing = rng.normal(size=(dims.overhead, LATENT_DIM)) / np.sqrt(LATENT_DIM)
    offsets = rng.normal(scale=OFFSET_SCALE, size=(dims.places, dims.transient))
    rows, cols = grid_shape(n)
    return World(config, rows, cols, cell_class, latents, mixing, offsets)


def cell_index(world: World, lat, lon) -> np.ndarray:
    """Cell id for each location; +180 and -180 longitude share a column."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    row = np.floor((lat - LAT_RANGE[0]) / (LAT_RANGE[1] - LAT_RANGE[0]) * world.rows).astype(int)
    row = np.clip(row, 0, world.rows - 1)
    col = np.floor(np.mod(lon + 180.0, 360.0) / 360.0 * world.cols).astype(int)
    col = np.clip(col, 0, world.cols - 1)
    return row * world.cols + col


def class_overhead(world: World) -> np.ndarray:
    """Noise-free overhead feature of every scene class, shape ``(P, D)``."""
    return world.latents @ world.mixing.T


def scene_class(world: World, lat, lon) -> np.ndarray:
    return world.cell_class[cell_index(world, lat, lon)]


def transient_logits(world: World, month, hour, lat, classes) -> np.ndarray:
    """Noise-free transient logits, shape ``(n, A)``."""
    month = np.asarray(month, dtype=float)[:, None]
    hour = np.asarray(hour, dtype=float)[:, None]
    lat = np.asarray(lat, dtype=float)[:, None]
    a = world.config.dims.transient
    latn = lat / 60.0
    season = np.cos(2 * np.pi * (month - 1.0) / 12.0)
    day = np.cos(2 * np.pi * (hour - 12.0) / 24.0)

    j = np.arange(a, dtype=float)[None, :]
    alpha = 1.0 + 0.5 * (j % 3)
    phi = (5.0 * j) % 24
    beta = 2.0 * (-1.0) ** j
    psi = 1.0 + (7.0 * j) % 12
    gamma = 3.0 - 1.5 * (j % 3)
    f = (alpha * np.cos(2 * np.pi * (hour - phi) / 24.0)
         + beta * np.cos(2 * np.pi * (month - psi) / 12.0) * latn
         + gamma * latn)
    f[:, 0] = ((2.5 - 1.5 * season * latn) * day)[:, 0]
    if a >= 2:
        f[:, 1] = (3.0 * season * np.tanh(lat / 15.0))[:, 0]
    return f + world.offsets[np.asarray(classes)]


def _check_bounds(lat) -> None:
    lat = np.asarray(lat)
    if np.any(lat < LAT_RANGE[0]) or np.any(lat > LAT_RANGE[1]):
        raise ValueError(f"latitude outside generator bounds {LAT_RANGE}")


def oracle_arrays(world: World, lat, lon, month, hour) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free (places, transient) for arrays of locations and times."""
    lat = np.atleast_1d(np.asarray(lat, dtype=float))
    lon = np.atleast_1d(np.asarray(lon, dtype=float))
    _check_bounds(lat)
    classes = scene_class(world, lat, lon)
    places = softmax(TAU * np.eye(world.config.dims.places)[classes])
    transient = sigmoid(transient_logits(world, np.atleast_1d(month), np.atleast_1d(hour), lat, classes))
    return places, transient


def oracle_attributes(config: WorldConfig, location: GeoLocation, time: TimeOfCapture, world: World | None = None) -> AttributeTargets:
    """The exact noise-free attributes the generator draws around."""
    world = world or build_world(config)
    places, transient = oracle_arrays(world, location.lat_deg, location.lon_deg, time.month, time.hour)
    return AttributeTargets(places[0], transient[0])


def generate_world(config: WorldConfig, n_samples: int) -> Dataset:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    world = build_world(config)
    dims = config.dims
    sigma = config.noise_sigma
    rng = np.random.default_rng([config.seed, 1])
    lat = rng.uniform(*LAT_RANGE, size=n_samples)
    lon = rng.uniform(*LON_RANGE, size=n_samples)
    month = rng.integers(1, 13, size=n_samples)
    hour = rng.integers(0, 24, size=n_samples)
    noise_over = rng.normal(size=(n_samples, dims.overhead))
    noise_places = rng.normal(size=(n_samples, dims.places))
    noise_trans = rng.normal(size=(n_samples, dims.transient))

    classes = scene_class(world, lat, lon)
    overhead = class_overhead(world)[classes] + sigma * noise_over
    places = softmax(TAU * np.eye(dims.places)[classes] + sigma * noise_places)
    transient = sigmoid(transient_logits(world, month, hour, lat, classes) + sigma * noise_trans)

    records = tuple(
        make_record(f"s{i:06d}", lat[i], lon[i], int(month[i]), int(hour[i]), overhead[i], places[i], transient[i])
        for i in range(n_samples)
    )
    return Dataset(dims, records)
