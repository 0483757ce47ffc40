# coding: utf-8

# # Where and when: localization and time verification
#
# Given observed attributes and a capture time, rank candidate locations by how
# well the model's prediction at each one matches. Given attributes and a
# location, rank the 288 (month, hour) slots instead.

import numpy as np

from dynmap.applications import localize, verify_time
from dynmap.dataset import TimeOfCapture
from dynmap.evaluation import topk_percent_hit
from dynmap.model import ModelConfig, build_model, train
from dynmap.synth import WorldConfig, generate_world

data = generate_world(WorldConfig(seed=1), 2300)
model, _ = train(build_model(ModelConfig(dims=data.dims, epochs=5)), data.subset(range(2000)))
held_out = data.subset(range(2000, 2300))

# ## Localization
#
# Each held-out record is a query; its own (location, overhead) is one of the
# candidates. Distances combine a KL term on places and an L2 term on transient
# attributes, each min-max scaled over the candidate set.

candidates = [(r.location, r.overhead) for r in held_out]
ranks = [localize(q.targets, q.time, candidates, model).rank_of(i) for i, q in enumerate(held_out)]
for k in (1, 5):
    print(f"top-{k}% localization:", np.mean([topk_percent_hit(r, len(candidates), k) for r in ranks]))

# ## Time verification
#
# The same idea over time. A photo whose claimed timestamp ranks poorly is suspect.

q = held_out[0]
grid = verify_time(q.targets, q.location, q.overhead, model, truth=q.time)
best = np.unravel_index(np.argmin(grid.distances), grid.distances.shape)
print("true time", q.time, "rank", grid.rank_of_truth, "of 288")
print("best slot: month", best[0] + 1, "hour", best[1])

ranks = [verify_time(r.targets, r.location, r.overhead, model, truth=r.time).rank_of_truth for r in held_out[:50]]
print("median rank of the true time:", float(np.median(ranks)))

# A wrong claim: shift the hour by twelve.

fake = TimeOfCapture(q.time.month, (q.time.hour + 12) % 24)
print("claimed", fake, "rank", verify_time(q.targets, q.location, q.overhead, model, truth=fake).rank_of_truth)
