"""Command line entry point: ``dynmap <subcommand> ...`` (or ``python -m dynmap``)."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import applications as apps
from .baselines import DEFAULT_SCALE_GRID, KnnConfig, grid_search_time_scale, knn_predict_dataset, prior_baseline
from .dataset import DatasetError, Dims, GeoLocation, TimeOfCapture, load_dataset, save_dataset, split_dataset
from .evaluation import DEFAULT_LAMBDA, evaluate_predictions, metrics_csv, topk_percent_hit
from .model import CheckpointError, ModelConfig, build_model, load_checkpoint, predict_records, save_checkpoint, train
from .synth import WorldConfig, generate_world

DISTANCE_KINDS = ("places", "transient", "combine")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _dims(text: str) -> Dims:
    parts = text.split(",")
    if len(parts) != 3 or not all(p.strip().isdigit() for p in parts):
        raise argparse.ArgumentTypeError("--dims must be D,P,A")
    return Dims(*(int(p) for p in parts))


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def cmd_synth(args) -> None:
    cfg = WorldConfig(args.dims, n_scene_cells=args.cells, noise_sigma=args.noise, seed=args.seed)
    save_dataset(generate_world(cfg, args.samples), args.out)


def cmd_train(args) -> None:
    data = load_dataset(args.data)
    cfg = ModelConfig(
        contexts=args.contexts, dims=data.dims, lr=args.lr, batch=args.batch,
        epochs=args.epochs, l2=args.l2, seed=args.seed,
    )
    model, report = train(build_model(cfg), data)
    for epoch, (pl, tl, tot) in enumerate(zip(report.places_loss, report.transient_loss, report.total_loss), 1):
        print(f"epoch {epoch}: places {pl:.6f} transient {tl:.6f} total {tot:.6f}", file=sys.stderr)
    save_checkpoint(model, args.out)


def cmd_eval(args) -> None:
    data = load_dataset(args.data)
    model = load_checkpoint(args.ckpt, expected_dims=data.dims)
    places, transient = predict_records(model, data)
    metrics = evaluate_predictions(places, transient, data.places_matrix(), data.transient_matrix())
    sys.stdout.write(metrics_csv((model.config.name, k, v) for k, v in metrics.items()))


def cmd_knn(args) -> None:
    train_set = load_dataset(args.train)
    test_set = load_dataset(args.test)
    features = args.features
    scales = (1.0, 1.0)
    if "time" in features:
        # scales are tuned with all features on a held-out slice of the training data
        fit, val = split_dataset(train_set, 0.2, args.seed)
        k = min(args.k, len(fit))
        scales = grid_search_time_scale(fit, val, args.grid, KnnConfig(k, ("time", "loc")))
        print(f"time scales (month, hour): {scales}", file=sys.stderr)
    cfg = KnnConfig(args.k, features, scales)
    places, transient = knn_predict_dataset(train_set, test_set, cfg)
    prior = prior_baseline(train_set)
    n = len(test_set)
    truth = (test_set.places_matrix(), test_set.transient_matrix())
    rows = [(f"{'+'.join(cfg.features)} (k-NN)", k, v) for k, v in evaluate_predictions(places, transient, *truth).items()]
    rows += [("prior", k, v) for k, v in
             evaluate_predictions(np.tile(prior.places, (n, 1)), np.tile(prior.transient, (n, 1)), *truth).items()]
    sys.stdout.write(metrics_csv(rows))


def _summary_csv(hits: dict[str, dict[float, list[bool]]]) -> str:
    rows = []
    for kind, per_k in hits.items():
        for kp, vals in per_k.items():
            rows.append((kind, f"top{kp:g}%", float(np.mean(vals)) if vals else float("nan")))
    return metrics_csv(rows).replace("model,metric,value", "distance,metric,value", 1)


def cmd_localize(args) -> None:
    model = load_checkpoint(args.ckpt)
    queries = load_dataset(args.queries)
    cand_set = load_dataset(args.candidates)
    for ds in (queries, cand_set):
        if ds.dims != model.config.dims:
            raise CheckpointError(f"dataset dims {ds.dims} do not match checkpoint dims {model.config.dims}")
    cand_index = {r.id: i for i, r in enumerate(cand_set)}
    candidates = [(r.location, r.overhead) for r in cand_set]
    n = len(candidates)
    hits = {kind: {kp: [] for kp in args.topk_percents} for kind in DISTANCE_KINDS}
    for q in queries:
        if q.id not in cand_index:
            raise DatasetError(f"query {q.id!r} has no candidate with the same id")
        truth = cand_index[q.id]
        ranked = apps.localize(q.targets, q.time, candidates, model, args.lam)
        p = ranked.profile
        for kind, scores in zip(DISTANCE_KINDS, (p.kl_places, p.l2_transient, p.combine)):
            rank = apps.rank_of(apps.rank_candidates(scores), truth)
            for kp in args.topk_percents:
                hits[kind][kp].append(topk_percent_hit(rank, n, kp))
    sys.stdout.write(_summary_csv(hits))


def cmd_verify(args) -> None:
    model = load_checkpoint(args.ckpt)
    queries = load_dataset(args.queries)
    if queries.dims != model.config.dims:
        raise CheckpointError(f"dataset dims {queries.dims} do not match checkpoint dims {model.config.dims}")
    heat_dir = Path(args.heatmap_dir) if args.heatmap_dir else None
    if heat_dir:
        heat_dir.mkdir(parents=True, exist_ok=True)
    n = apps.N_MONTHS * apps.N_HOURS
    hits = {kind: {kp: [] for kp in args.topk_percents} for kind in DISTANCE_KINDS}
    for q in queries:
        grid = apps.verify_time(q.targets, q.location, q.overhead, model, args.lam, truth=q.time)
        for kind in DISTANCE_KINDS:
            rank = grid.rank(kind)
            for kp in args.topk_percents:
                hits[kind][kp].append(topk_percent_hit(rank, n, kp))
        if heat_dir:
            apps.write_month_hour_csv(heat_dir / f"{q.id}.csv", grid.distances, "combine")
            apps.write_pgm(heat_dir / f"{q.id}.pgm", apps.to_gray(grid.distances))
    sys.stdout.write(_summary_csv(hits))


def _load_overhead(source: str, gallery, dim: int) -> np.ndarray:
    for r in gallery:
        if r.id == source:
            return r.overhead
    path = Path(source)
    if not path.is_file():
        raise DatasetError(f"--overhead-from {source!r} is neither a gallery id nor a file")
    try:
        values = np.asarray(json.loads(path.read_text(encoding="utf-8")), dtype=float)
    except (json.JSONDecodeError, ValueError, TypeError) as exc:
        raise DatasetError(f"{path}: expected a JSON list of {dim} numbers") from exc
    if values.shape != (dim,) or not np.all(np.isfinite(values)):
        raise DatasetError(f"{path}: expected a JSON list of {dim} finite numbers")
    return values


def cmd_retrieve(args) -> None:
    model = load_checkpoint(args.ckpt)
    gallery = load_dataset(args.gallery)
    if gallery.dims != model.config.dims:
        raise CheckpointError(f"gallery dims {gallery.dims} do not match checkpoint dims {model.config.dims}")
    overhead = _load_overhead(args.overhead_from, gallery, model.config.dims.overhead)
    result = apps.retrieve(overhead, GeoLocation(args.lat, args.lon), TimeOfCapture(args.month, args.hour),
                           gallery, model, args.lam, min(args.n, len(gallery)))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["rank", "id", "combine"])
    for i, (rid, score) in enumerate(zip(result.ids, result.scores)):
        writer.writerow([i, rid, repr(float(score))])


def cmd_map(args) -> None:
    model = load_checkpoint(args.ckpt)
    cells, shape = apps.load_cells(args.cells)
    request = apps.MapGridRequest(cells, TimeOfCapture(args.month, args.hour), apps.AttributeSelector.parse(args.attribute), shape)
    apps.render_attribute_map(request, model, csv_path=args.csv, pgm_path=args.pgm)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynmap", description="Dynamic visual-attribute maps: data, training, baselines and applications.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", type=_dims, default=Dims(16, 10, 6))
    p.add_argument("--cells", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--contexts", type=_names, default=("sat", "time", "loc"))
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--l2", type=float, default=0.0005)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Top-1/Top-5 and within-threshold metrics as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("knn", help="k-NN and prior baselines")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--k", type=int, default=30)
    p.add_argument("--features", type=_names, default=("time", "loc"))
    p.add_argument("--grid", type=_floats, default=list(DEFAULT_SCALE_GRID))
    p.add_argument("--seed", type=int, default=0, help="seed of the validation split used for the grid search")
    p.set_defaults(func=cmd_knn)

    p = sub.add_parser("localize", help="rank candidate locations for each query")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--topk-percents", type=_floats, default=[1.0, 5.0])
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("verify", help="rank the 12x24 capture times for each query")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--topk-percents", type=_floats, default=[1.0, 5.0])
    p.add_argument("--heatmap-dir")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("retrieve", help="gallery records most consistent with a place and time")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--lat", type=float, required=True)
    p.add_argument("--lon", type=float, required=True)
    p.add_argument("--month", type=int, required=True)
    p.add_argument("--hour", type=int, required=True)
    p.add_argument("--overhead-from", required=True, help="gallery record id or JSON file with the feature vector")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("map", help="render one attribute over a grid of cells")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--cells", required=True)
    p.add_argument("--month", type=int, required=True)
    p.add_argument("--hour", type=int, required=True)
    p.add_argument("--attribute", required=True, help="transient:IDX or places:IDX")
    p.add_argument("--csv", required=True)
    p.add_argument("--pgm")
    p.set_defaults(func=cmd_map)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (DatasetError, CheckpointError, ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
