# coding: utf-8

# # Maps, time series and retrieval
#
# With a trained model, any attribute can be rendered over a grid of cells at a
# chosen time, written as CSV plus an 8-bit PGM image.

from pathlib import Path

import numpy as np

from dynmap.applications import (
    AttributeSelector, MapGridRequest, attribute_timeseries, render_attribute_map, retrieve,
)
from dynmap.dataset import GeoLocation, TimeOfCapture
from dynmap.model import ModelConfig, build_model, train
from dynmap.synth import WorldConfig, build_world, class_overhead, generate_world, scene_class

config = WorldConfig(seed=1)
data = generate_world(config, 2500)
model, _ = train(build_model(ModelConfig(dims=data.dims, epochs=5)), data.subset(range(2000)))
world = build_world(config)

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

# A 24 x 48 grid between 60S and 60N, using each cell's noise-free overhead feature.

lats, lons = np.linspace(57.5, -57.5, 24), np.linspace(-176.25, 176.25, 48)
cells = [(GeoLocation(a, b), class_overhead(world)[int(scene_class(world, a, b))]) for a in lats for b in lons]
daylight = AttributeSelector("transient", 0)
for hour in (0, 12):
    values = render_attribute_map(MapGridRequest(cells, TimeOfCapture(6, hour), daylight, (24, 48)), model,
                                  csv_path=out / f"daylight_{hour:02d}.csv", pgm_path=out / f"daylight_{hour:02d}.pgm")
    print(f"June {hour:02d}:00 mean daylight {values.mean():.3f}")

# The same attribute at one place over all months and hours.

loc, over = cells[len(cells) // 2]
series = attribute_timeseries(loc, over, model, daylight)
print("peak hour per month:", np.argmax(series, axis=1))

# Retrieval: which gallery records best fit a place, a time and an overhead feature?

gallery = data.subset(range(2000, 2500))
rec = gallery[0]
hits = retrieve(rec.overhead, rec.location, TimeOfCapture(rec.time.month, 12), gallery, model, n=5)
for rid, score in zip(hits.ids, hits.scores):
    print(rid, f"{score:.3f}", gallery[int(rid[1:]) - 2000].time)
