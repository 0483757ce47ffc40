# coding: utf-8

# # Nearest-neighbour baselines
#
# Before training anything, a k-NN over raw latitude/longitude (and optionally
# scaled month/hour) shows how much of the signal is purely geographic.

import numpy as np

from dynmap.baselines import KnnConfig, grid_search_time_scale, knn_predict_dataset, prior_baseline
from dynmap.dataset import split_dataset
from dynmap.evaluation import evaluate_predictions
from dynmap.synth import WorldConfig, generate_world

data = generate_world(WorldConfig(seed=1), 3000)
train_set, test_set = split_dataset(data, 0.2, seed=0)
truth = (test_set.places_matrix(), test_set.transient_matrix())

# The prior predicts the training mean everywhere.

prior = prior_baseline(train_set)
n = len(test_set)
print("prior   ", evaluate_predictions(np.tile(prior.places, (n, 1)), np.tile(prior.transient, (n, 1)), *truth))

# Location alone already finds the scene class most of the time.

loc_only = KnnConfig(k=30, features=("loc",))
print("loc k-NN", evaluate_predictions(*knn_predict_dataset(train_set, test_set, loc_only), *truth))

# Month and hour live on a different scale from degrees. Pick their weights on
# a held-out slice of the training data.

fit, val = split_dataset(train_set, 0.2, seed=0)
scales = grid_search_time_scale(fit, val, (0.1, 1.0, 10.0))
print("chosen (month, hour) scales:", scales)
both = KnnConfig(k=30, features=("time", "loc"), time_scales=scales)
print("t+l k-NN", evaluate_predictions(*knn_predict_dataset(train_set, test_set, both), *truth))
