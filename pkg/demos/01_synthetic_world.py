# coding: utf-8

# # A synthetic world with a known answer
#
# Real overhead imagery is not shipped here, so every demo runs on a generated
# world whose attribute distribution is known exactly. Scene classes tile the
# globe in rectangles; the overhead feature depends only on the scene, while the
# transient attributes also move with month, hour and latitude.

import numpy as np

from dynmap.dataset import GeoLocation, TimeOfCapture
from dynmap.synth import WorldConfig, build_world, generate_world, oracle_attributes

config = WorldConfig(seed=1)
world = build_world(config)
print("grid of scene cells:", world.rows, "x", world.cols)
print("cell classes (first row):", world.cell_class[: world.cols])

# Draw a few thousand noisy samples. Ids are deterministic (s000000, s000001, ...).

data = generate_world(config, 2000)
print(len(data), "records with dims", data.dims)
print(data[0].id, data[0].location, data[0].time)

# ## What the oracle says
#
# Transient attribute 0 behaves like daylight: it peaks at noon and dips at midnight.

loc = GeoLocation(40.0, -75.0)
for hour in (0, 6, 12, 18):
    t = oracle_attributes(config, loc, TimeOfCapture(6, hour), world=world)
    print(f"June {hour:02d}:00  daylight={t.transient[0]:.3f}")

# Attribute 1 is a winter signal: high in January in the north, high in July in the south.

for lat in (45.0, -45.0):
    jan = oracle_attributes(config, GeoLocation(lat, 10.0), TimeOfCapture(1, 12), world=world).transient[1]
    jul = oracle_attributes(config, GeoLocation(lat, 10.0), TimeOfCapture(7, 12), world=world).transient[1]
    print(f"lat {lat:+.0f}: winter Jan={jan:.3f} Jul={jul:.3f}")

# Places are a sharp distribution around the scene class, and do not depend on time.

p = oracle_attributes(config, loc, TimeOfCapture(1, 0), world=world).places
print("dominant place:", int(np.argmax(p)), "mass", round(float(p.max()), 3))
