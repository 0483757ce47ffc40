"""Exit criteria for the package, one test per criterion.

Every test logs a PASS/FAIL line; the lines are printed in the pytest
terminal summary under "acceptance criteria".
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from dynmap.applications import localize, verify_time
from dynmap.baselines import KnnConfig, knn_features, knn_predict, neighbor_indices, prior_baseline
from dynmap.dataset import AttributeTargets, DatasetError, Dims, GeoLocation, TimeOfCapture, load_dataset, save_dataset
from dynmap.encoding import ContextInputs, encode_location, encode_time, encode_time_arrays, encode_location_arrays
from dynmap.evaluation import rank_candidates, topk_accuracy, topk_percent_budget, topk_percent_hit, within_threshold
from dynmap.model import (
    CheckpointError,
    build_model,
    load_checkpoint,
    predict,
    predict_arrays,
    save_checkpoint,
    train,
)
from dynmap.neuralnet import AdamState, adam_step, kl_loss

from conftest import random_dataset, record, tiny_config, tiny_model
from gradcheck import model_gradient_errors, random_batch, randomize_biases
from test_baselines import brute_force_neighbors

ABLATIONS = [c for r in (1, 2, 3) for c in itertools.combinations(("sat", "time", "loc"), r)]
LOSS_MODES = [(True, False), (False, True), (True, True)]


def test_ac1_gradient_suite():
    start = time.perf_counter()
    worst = worst_abs = 0.0
    combos = list(itertools.product(ABLATIONS, LOSS_MODES))
    for i in range(50):
        contexts, (use_p, use_t) = combos[i % len(combos)]
        model = randomize_biases(tiny_model(contexts, seed=i, l2=0.001 * (i % 3)), 1000 + i)
        rel, absdiff = model_gradient_errors(model, random_batch(model, 3, i), use_places=use_p, use_transient=use_t)
        worst, worst_abs = max(worst, rel), max(worst_abs, absdiff)
    elapsed = time.perf_counter() - start
    record("AC1 gradient suite", worst < 1e-4 and elapsed < 30,
           f"50 models, max rel err {worst:.2e} (< 1e-4, 1e-6 abs floor; max abs diff {worst_abs:.1e}), "
           f"{elapsed:.1f}s (< 30s)")


def test_ac2_normalization_suite():
    rng = np.random.default_rng(0)
    sums, lo, hi, kl_min, kl_self = 0.0, 1.0, 0.0, math.inf, 0.0
    count = 0
    for i, contexts in enumerate(itertools.islice(itertools.cycle(ABLATIONS), 10)):
        model = build_model(tiny_config(contexts, Dims(16, 10, 6), seed=i, encoder_widths=(32, 64, 16),
                                        head_widths=(32, 16), estimator_widths=(32, 64)))
        n = 1000
        tv = encode_time_arrays(rng.integers(1, 13, n), rng.integers(0, 24, n))
        lv = encode_location_arrays(rng.uniform(-90, 90, n), rng.uniform(-180, 180, n))
        ov = rng.normal(scale=3.0, size=(n, 16))
        places, transient = predict_arrays(model, tv, lv, ov)
        count += n
        sums = max(sums, float(np.max(np.abs(places.sum(axis=1) - 1))))
        lo, hi = min(lo, float(transient.min())), max(hi, float(transient.max()))
        targets = rng.dirichlet(np.full(10, 0.3), size=n)
        kl_min = min(kl_min, float(kl_loss(targets, places)[0].min()))
        kl_self = max(kl_self, float(kl_loss(places, places)[0].max()))
    ok = count == 10_000 and sums <= 1e-6 and 0 < lo and hi < 1 and kl_min >= -1e-9 and kl_self <= 1e-6
    record("AC2 normalization suite", ok,
           f"{count} predicts, max |sum-1| {sums:.1e}, transient in [{lo:.3g}, {hi:.6g}], "
           f"min KL {kl_min:.2e}, max KL(p,p) {kl_self:.1e}")


def test_ac3_encoder_exactness():
    cases = [
        (encode_time(TimeOfCapture(1, 0)), [-1, -1]),
        (encode_time(TimeOfCapture(12, 23)), [1, 1]),
        (encode_location(GeoLocation(0, 0)), [1, 0, 0]),
        (encode_location(GeoLocation(0, 90)), [0, 1, 0]),
        (encode_location(GeoLocation(90, 0)), [0, 0, 0.9966472]),
    ]
    err = max(float(np.max(np.abs(np.asarray(got) - want))) for got, want in cases)
    record("AC3 encoder exactness", err <= 1e-6, f"max abs error {err:.2e} (<= 1e-6)")


def test_ac4_adam_and_determinism(tmp_path):
    theta = np.zeros(1)
    state = AdamState.for_params([theta], lr=0.001)
    adam_step(state, [theta], [np.array([0.5])])
    step_err = abs(theta[0] - (-0.00099999998))

    data = random_dataset(90, Dims(4, 3, 2), seed=1)
    paths = []
    for run in range(2):
        model, _ = train(tiny_model(epochs=3, seed=5), data)
        path = tmp_path / f"run{run}.json"
        save_checkpoint(model, path)
        paths.append(path)
    identical = paths[0].read_bytes() == paths[1].read_bytes()
    record("AC4 Adam step and determinism", step_err <= 1e-9 and identical,
           f"theta={theta[0]!r} (err {step_err:.1e} <= 1e-9), identical checkpoints: {identical}")


class TestAc5AblationOrdering:
    MARGIN = 1.0  # accuracy points

    @pytest.mark.slow
    def test_places_full_over_sat_loc(self, ablation_run):
        m = ablation_run.metrics
        a, b = m[("sat", "time", "loc")]["top1"], m[("sat", "loc")]["top1"]
        record("AC5a Places top1 sat+time+loc >= sat+loc (+1pt)", a - b >= self.MARGIN, f"{a:.2f} vs {b:.2f}")

    @pytest.mark.slow
    def test_places_sat_loc_over_loc(self, ablation_run):
        m = ablation_run.metrics
        a, b = m[("sat", "loc")]["top1"], m[("loc",)]["top1"]
        record("AC5b Places top1 sat+loc >= loc (+1pt)", a - b >= self.MARGIN, f"{a:.2f} vs {b:.2f}")

    @pytest.mark.slow
    def test_transient_full_over_sat_time(self, ablation_run):
        m = ablation_run.metrics
        a, b = m[("sat", "time", "loc")]["within0.1"], m[("sat", "time")]["within0.1"]
        record("AC5c Transient within0.1 sat+time+loc >= sat+time (+1pt)", a - b >= self.MARGIN, f"{a:.2f} vs {b:.2f}")

    @pytest.mark.slow
    def test_transient_sat_time_over_sat(self, ablation_run):
        m = ablation_run.metrics
        a, b = m[("sat", "time")]["within0.1"], m[("sat",)]["within0.1"]
        record("AC5d Transient within0.1 sat+time >= sat (+1pt)", a - b >= self.MARGIN, f"{a:.2f} vs {b:.2f}")

    @pytest.mark.slow
    def test_runtime(self, ablation_run):
        record("AC5e ablation run time", ablation_run.seconds < 300, f"{ablation_run.seconds:.0f}s (< 300s)")


def test_ac6_knn_oracle():
    mismatches = 0
    rng = np.random.default_rng(6)
    for trial in range(100):
        n = int(rng.integers(1, 201))
        ds = random_dataset(n, Dims(1, 4, 2), seed=trial)
        features = [("loc",), ("time",), ("time", "loc")][trial % 3]
        cfg = KnnConfig(int(rng.integers(1, n + 1)), features, tuple(rng.choice([0.1, 1.0, 10.0], 2)))
        feats = knn_features(ds.latlon(), ds.month_hour(), cfg)
        # time-only features on integer months/hours produce many exact ties
        for q in random_dataset(3, Dims(1, 4, 2), seed=10_000 + trial, prefix="q"):
            qf = knn_features(np.array([[q.location.lat_deg, q.location.lon_deg]]),
                              np.array([[q.time.month, q.time.hour]], dtype=float), cfg)[0]
            mismatches += neighbor_indices(feats, qf, cfg.k).tolist() != brute_force_neighbors(ds, q, cfg)

    ds = random_dataset(57, Dims(1, 4, 2), seed=3)
    prior = prior_baseline(ds)
    exact = all(
        np.array_equal(p.places, prior.places) and np.array_equal(p.transient, prior.transient)
        for p in (knn_predict(ds, q, KnnConfig(57, f, (0.3, 3.0)))
                  for q in random_dataset(5, Dims(1, 4, 2), seed=4, prefix="q")
                  for f in (("loc",), ("time",), ("time", "loc")))
    )
    record("AC6 k-NN oracle", mismatches == 0 and exact,
           f"{mismatches} neighbor-set mismatches over 100 datasets x 3 queries; k=N equals prior: {exact}")


def _own_prediction(model, loc, t, overhead):
    pred = predict(model, ContextInputs(encode_time(t), encode_location(loc), np.asarray(overhead)))
    return AttributeTargets(pred.places / pred.places.sum(), pred.transient)


@pytest.mark.slow
def test_ac7_localization_self_consistency(ablation_run):
    model = ablation_run.models[("sat", "time", "loc")]
    cands = [(r.location, r.overhead) for r in ablation_run.test_set.records[:200]]
    hits, endpoint_ok = 0, True
    rng = np.random.default_rng(7)
    for j in range(200):
        t = TimeOfCapture(int(rng.integers(1, 13)), int(rng.integers(0, 24)))
        query = _own_prediction(model, *cands[j][:1], t, cands[j][1])
        ranked = localize(query, t, cands, model, 0.58)
        hits += ranked.rank_of(j) == 0
        if j < 20:
            for lam, key in ((1.0, "kl_places"), (0.0, "l2_transient")):
                r = localize(query, t, cands, model, lam)
                endpoint_ok &= r.order.tolist() == rank_candidates(getattr(r.profile, key)).tolist()
    record("AC7 localization self-consistency", hits == 200 and endpoint_ok,
           f"top-1 hit rate {hits}/200; lambda 0/1 match raw L2/KL rankings: {endpoint_ok}")


@pytest.mark.slow
def test_ac8_verification_grid(ablation_run):
    model = ablation_run.models[("sat", "time", "loc")]
    rng = np.random.default_rng(8)
    zero = 0
    for i in range(100):
        rec = ablation_run.test_set[i]
        truth = TimeOfCapture(int(rng.integers(1, 13)), int(rng.integers(0, 24)))
        query = _own_prediction(model, rec.location, truth, rec.overhead)
        grid = verify_time(query, rec.location, rec.overhead, model, 0.58, truth=truth)
        zero += grid.rank_of_truth == 0
    budget = topk_percent_budget(288, 1)
    record("AC8 verification grid", zero == 100 and budget == 3,
           f"rank_of_truth == 0 in {zero}/100 trials; Top-1% budget over 288 cells = {budget}")


def test_ac9_metric_arithmetic():
    checks = {
        "top1 perfect": topk_accuracy(np.array([[0.6, 0.3, 0.1]]), np.array([[0.6, 0.3, 0.1]]), 1) == 1.0,
        "top5 uniform tie rule": (topk_accuracy(np.full((10, 10), 0.1), np.eye(10), 5) == 0.5),
        "within equal": within_threshold([[0.3, 0.7]], [[0.3, 0.7]], 0.1) == 1.0,
        "within boundary": within_threshold([[0.1]], [[0.2]], 0.1) == 1.0,
        "n=1000 k=1% rank 9 hit": topk_percent_hit(9, 1000, 1),
        "n=1000 k=1% rank 10 miss": not topk_percent_hit(10, 1000, 1),
        "n=288 k=1% budget 3": topk_percent_budget(288, 1) == 3,
        "n=288 k=5% budget 15": topk_percent_budget(288, 5) == 15,
    }
    failed = [k for k, v in checks.items() if not v]
    record("AC9 metric arithmetic", not failed, f"{len(checks) - len(failed)}/{len(checks)} exact" + (f"; failed {failed}" if failed else ""))


def _dataset_corpus(tmp_path):
    man = json.dumps({"dims": {"overhead": 2, "places": 2, "transient": 1}})
    good = dict(id="a", lat=1.0, lon=2.0, month=3, hour=4, overhead=[0.1, 0.2], places=[0.4, 0.6], transient=[0.5])

    def rec(**kw):
        d = dict(good)
        d.update(kw)
        return json.dumps(d)

    def without(key):
        d = dict(good)
        del d[key]
        return json.dumps(d)

    texts = [
        "",
        "not json\n",
        "[1, 2]\n",
        json.dumps({"dims": {"overhead": 2, "places": 2}}) + "\n",
        json.dumps({"dims": {"overhead": 0, "places": 2, "transient": 1}}) + "\n",
        man + "\n" + rec()[:-5] + "\n",
        man + "\n" + rec(month=0) + "\n",
        man + "\n" + rec(hour=24) + "\n",
        man + "\n" + rec(lat=91.0) + "\n",
        man + "\n" + rec(lon=-181.0) + "\n",
        man + "\n" + rec(places=[0.5, 0.6]) + "\n",
        man + "\n" + rec(places=[1.2, -0.2]) + "\n",
        man + "\n" + rec(transient=[1.5]) + "\n",
        man + "\n" + rec(overhead=[0.1]) + "\n",
        man + "\n" + rec(places=[1.0]) + "\n",
        man + "\n" + without("hour") + "\n",
        man + "\n" + rec(id=7) + "\n",
        man + "\n" + rec() + "\n" + rec() + "\n",
        man + "\n" + rec(overhead="abc") + "\n",
        man + "\n" + rec(month=2.5) + "\n",
    ]
    paths = []
    for i, text in enumerate(texts):
        p = tmp_path / f"bad{i}.jsonl"
        p.write_text(text)
        paths.append(p)
    return paths


def _checkpoint_corpus(tmp_path):
    good_path = tmp_path / "good.json"
    save_checkpoint(tiny_model(), good_path)
    good = json.loads(good_path.read_text())
    text = good_path.read_text()

    variants = [text[: len(text) // 3], "", "[]", json.dumps({"format_version": 1})]
    mutations = [
        lambda d: d.update(format_version=2),
        lambda d: d["config"].update(contexts=[]),
        lambda d: d["config"]["dims"].update(overhead=5),
        lambda d: d["params"].pop("places_estimator"),
        lambda d: d["params"]["time_encoder"][0].update(weights=[[1.0]]),
        lambda d: d["params"]["transient_estimator"][-1].update(activation="tanh"),
    ]
    for mutate in mutations:
        d = json.loads(text)
        mutate(d)
        variants.append(json.dumps(d))
    paths = []
    for i, v in enumerate(variants):
        p = tmp_path / f"badckpt{i}.json"
        p.write_text(v)
        paths.append(p)
    return paths


def test_ac10_round_trips_and_fuzz(tmp_path):
    from dynmap.synth import WorldConfig, generate_world

    data = generate_world(WorldConfig(seed=2), 300)
    save_dataset(data, tmp_path / "d.jsonl")
    data_ok = load_dataset(tmp_path / "d.jsonl") == data

    model, _ = train(tiny_model(dims=data.dims, epochs=1), data)
    save_checkpoint(model, tmp_path / "m.json")
    again = load_checkpoint(tmp_path / "m.json")
    batch = random_batch(model, 200, 1)[:3]
    ckpt_ok = all(np.array_equal(a, b) for a, b in zip(predict_arrays(model, *batch), predict_arrays(again, *batch)))

    typed, total, untyped = 0, 0, []
    for path in _dataset_corpus(tmp_path):
        total += 1
        try:
            load_dataset(path)
            untyped.append(f"{path.name}: loaded")
        except DatasetError:
            typed += 1
        except Exception as exc:  # noqa: BLE001
            untyped.append(f"{path.name}: {type(exc).__name__}")
    for path in _checkpoint_corpus(tmp_path):
        total += 1
        try:
            load_checkpoint(path)
            untyped.append(f"{path.name}: loaded")
        except CheckpointError:
            typed += 1
        except Exception as exc:  # noqa: BLE001
            untyped.append(f"{path.name}: {type(exc).__name__}")
    record("AC10 round-trips and malformed-input fuzz", data_ok and ckpt_ok and typed == total == 30,
           f"dataset exact: {data_ok}, checkpoint bitwise: {ckpt_ok}, typed errors {typed}/{total}"
           + (f"; untyped {untyped}" if untyped else ""))
