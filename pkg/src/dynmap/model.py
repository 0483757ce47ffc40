"""The dynamic appearance model: context networks feeding per-attribute estimators.

Context embeddings are concatenated in the fixed order (sat, time, loc),
keeping only the enabled contexts. The overhead branch has a separate head
per attribute; the time and location encoders are shared by both estimators.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, Dims
from .encoding import ContextInputs, encode_location_arrays, encode_time_arrays
from .neuralnet import AdamState, Mlp, DenseLayer, adam_step, build_mlp, kl_loss, l2_penalty, mlp_backward, mlp_forward, mse_loss

CONTEXT_ORDER = ("sat", "time", "loc")
NET_NAMES = (
    "sat_head_places",
    "sat_head_transient",
    "time_encoder",
    "loc_encoder",
    "places_estimator",
    "transient_estimator",
)
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    contexts: tuple[str, ...] = CONTEXT_ORDER
    dims: Dims = field(default_factory=Dims)
    lr: float = 0.001
    batch: int = 32
    epochs: int = 10
    l2: float = 0.0005
    seed: int = 0
    encoder_widths: tuple[int, ...] = (256, 512, 128)
    head_widths: tuple[int, ...] = (256, 128)
    estimator_widths: tuple[int, ...] = (256, 512)

    def __post_init__(self) -> None:
        ctx = tuple(self.contexts)
        if not ctx:
            raise ValueError("at least one context (sat, time, loc) must be enabled")
        unknown = set(ctx) - set(CONTEXT_ORDER)
        if unknown:
            raise ValueError(f"unknown contexts {sorted(unknown)}")
        object.__setattr__(self, "contexts", tuple(c for c in CONTEXT_ORDER if c in ctx))
        for name in ("encoder_widths", "head_widths", "estimator_widths"):
            object.__setattr__(self, name, tuple(int(w) for w in getattr(self, name)))
        if self.encoder_widths[-1] != self.head_widths[-1]:
            raise ValueError("context encoders and overhead heads must share an embedding width")
        if self.batch < 1 or self.epochs < 0 or self.lr < 0 or self.l2 < 0:
            raise ValueError("invalid training hyperparameters")

    @property
    def name(self) -> str:
        return "+".join(self.contexts)

    @property
    def embedding_width(self) -> int:
        return self.encoder_widths[-1]

    @property
    def estimator_input_width(self) -> int:
        return self.embedding_width * len(self.contexts)

    def to_json(self) -> dict:
        d = asdict(self)
        d["contexts"] = list(self.contexts)
        d["dims"] = self.dims.as_dict()
        for name in ("encoder_widths", "head_widths", "estimator_widths"):
            d[name] = list(d[name])
        return d

    @classmethod
    def from_json(cls, d: dict) -> ModelConfig:
        d = dict(d)
        d["dims"] = Dims(**d["dims"])
        for name in ("contexts", "encoder_widths", "head_widths", "estimator_widths"):
            d[name] = tuple(d[name])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class AttributePrediction:
    places: np.ndarray
    transient: np.ndarray


@dataclass
class TrainingReport:
    places_loss: list[float] = field(default_factory=list)
    transient_loss: list[float] = field(default_factory=list)
    total_loss: list[float] = field(default_factory=list)


@dataclass
class DynamicMapModel:
    config: ModelConfig
    nets: dict[str, Mlp]

    def __getattr__(self, name: str) -> Mlp:
        if name in NET_NAMES:
            try:
                return self.__dict__["nets"][name]
            except KeyError:
                raise AttributeError(f"{name} is not allocated for contexts {self.config.name}") from None
        raise AttributeError(name)

    def trainable(self) -> list[tuple[str, Mlp]]:
        return [(n, self.nets[n]) for n in NET_NAMES if n in self.nets]

    def parameters(self) -> list[np.ndarray]:
        return [p for _, net in self.trainable() for p in net.parameters()]


def build_model(config: ModelConfig) -> DynamicMapModel:
    cfg = config
    dims = cfg.dims
    relu = lambda n: ["relu"] * n  # noqa: E731
    nets: dict[str, Mlp] = {}

    def seed_for(name: str) -> list[int]:
        return [cfg.seed, NET_NAMES.index(name)]

    if "sat" in cfg.contexts:
        widths = (dims.overhead, *cfg.head_widths)
        for name in ("sat_head_places", "sat_head_transient"):
            nets[name] = build_mlp(widths, relu(len(cfg.head_widths)), seed_for(name))
    if "time" in cfg.contexts:
        nets["time_encoder"] = build_mlp((2, *cfg.encoder_widths), relu(len(cfg.encoder_widths)), seed_for("time_encoder"))
    if "loc" in cfg.contexts:
        nets["loc_encoder"] = build_mlp((3, *cfg.encoder_widths), relu(len(cfg.encoder_widths)), seed_for("loc_encoder"))
    hidden = (cfg.estimator_input_width, *cfg.estimator_widths)
    n_hidden = len(cfg.estimator_widths)
    nets["places_estimator"] = build_mlp((*hidden, dims.places), relu(n_hidden) + ["softmax"], seed_for("places_estimator"))
    nets["transient_estimator"] = build_mlp((*hidden, dims.transient), relu(n_hidden) + ["sigmoid"], seed_for("transient_estimator"))
    return DynamicMapModel(cfg, nets)


def _forward(model: DynamicMapModel, time_vec, loc_vec, overhead):
    nets = model.nets
    tapes = {}
    places_parts, transient_parts = [], []
    for ctx in model.config.contexts:
        if ctx == "sat":
            ep, tapes["sat_head_places"] = mlp_forward(nets["sat_head_places"], overhead)
            et, tapes["sat_head_transient"] = mlp_forward(nets["sat_head_transient"], overhead)
        else:
            name = f"{ctx}_encoder"
            ep, tapes[name] = mlp_forward(nets[name], time_vec if ctx == "time" else loc_vec)
            et = ep
        places_parts.append(ep)
        transient_parts.append(et)
    places, tapes["places_estimator"] = mlp_forward(nets["places_estimator"], np.concatenate(places_parts, axis=-1))
    transient, tapes["transient_estimator"] = mlp_forward(nets["transient_estimator"], np.concatenate(transient_parts, axis=-1))
    return places, transient, tapes


def predict_arrays(model: DynamicMapModel, time_vec, loc_vec, overhead) -> tuple[np.ndarray, np.ndarray]:
    """Batched prediction from already-encoded inputs (rows are samples).

    Disabled contexts are never read, so their arguments may be ``None``.
    """
    ctx = model.config.contexts
    if "sat" in ctx:
        overhead = np.asarray(overhead, dtype=float)
        if overhead.shape[-1] != model.config.dims.overhead:
            raise ValueError(f"overhead length {overhead.shape[-1]} != model D={model.config.dims.overhead}")
    places, transient, _ = _forward(model, time_vec, loc_vec, overhead)
    return places, transient


def predict(model: DynamicMapModel, inputs: ContextInputs) -> AttributePrediction:
    places, transient = predict_arrays(model, inputs.time_vec, inputs.loc_vec, inputs.overhead)
    return AttributePrediction(places, transient)


def predict_records(model: DynamicMapModel, dataset: Dataset, batch: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    time_vec, loc_vec, overhead = encode_dataset(dataset)
    dims = model.config.dims
    if len(dataset) == 0:
        return np.zeros((0, dims.places)), np.zeros((0, dims.transient))
    outs = [
        predict_arrays(model, time_vec[i:i + batch], loc_vec[i:i + batch], overhead[i:i + batch])
        for i in range(0, len(dataset), batch)
    ]
    return np.vstack([o[0] for o in outs]), np.vstack([o[1] for o in outs])


def encode_dataset(dataset: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mh = dataset.month_hour()
    ll = dataset.latlon()
    return (
        encode_time_arrays(mh[:, 0], mh[:, 1]),
        encode_location_arrays(ll[:, 0], ll[:, 1]),
        dataset.overhead_matrix(),
    )


def loss_and_grads(
    model: DynamicMapModel,
    time_vec: np.ndarray,
    loc_vec: np.ndarray,
    overhead: np.ndarray,
    places_target: np.ndarray,
    transient_target: np.ndarray,
    use_places: bool = True,
    use_transient: bool = True,
    l2: float | None = None,
):
    """Batch-mean loss and parameter gradients for every trainable net.

    Returns ``(total, places_mean, transient_mean, grads)`` where ``grads`` maps
    net name to a gradient list in ``Mlp.parameters()`` order.
    """
    cfg = model.config
    l2 = cfg.l2 if l2 is None else l2
    places, transient, tapes = _forward(model, time_vec, loc_vec, overhead)
    b = places.shape[0]
    kl, g_logits = kl_loss(places_target, places)
    mse, g_trans = mse_loss(transient_target, transient)
    places_mean = float(np.mean(kl))
    transient_mean = float(np.mean(mse))

    grads: dict[str, list[np.ndarray]] = {}
    grads["places_estimator"], g_pin = mlp_backward(
        model.nets["places_estimator"], tapes["places_estimator"],
        g_logits * (use_places / b), through_output_activation=False)
    grads["transient_estimator"], g_tin = mlp_backward(
        model.nets["transient_estimator"], tapes["transient_estimator"], g_trans * (use_transient / b))

    w = cfg.embedding_width
    for k, ctx in enumerate(cfg.contexts):
        gp = g_pin[:, k * w:(k + 1) * w]
        gt = g_tin[:, k * w:(k + 1) * w]
        if ctx == "sat":
            grads["sat_head_places"], _ = mlp_backward(model.nets["sat_head_places"], tapes["sat_head_places"], gp)
            grads["sat_head_transient"], _ = mlp_backward(model.nets["sat_head_transient"], tapes["sat_head_transient"], gt)
        else:
            name = f"{ctx}_encoder"
            grads[name], _ = mlp_backward(model.nets[name], tapes[name], gp + gt)

    order = model.trainable()
    grad_lists = [grads[n] for n, _ in order]
    penalty, _ = l2_penalty([net for _, net in order], l2, grad_lists)
    total = use_places * places_mean + use_transient * transient_mean + penalty
    return total, places_mean, transient_mean, grads


def train(model: DynamicMapModel, train_set: Dataset) -> tuple[DynamicMapModel, TrainingReport]:
    """Minibatch Adam on KL(places) + MSE(transient) + L2; returns a trained copy.

    Each epoch reshuffles with a generator seeded by ``(seed, epoch)``; the
    last short batch is kept.
    """
    cfg = model.config
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    if train_set.dims != cfg.dims:
        raise ValueError(f"dataset dims {train_set.dims} do not match model dims {cfg.dims}")
    model = copy.deepcopy(model)
    time_vec, loc_vec, overhead = encode_dataset(train_set)
    places_t = train_set.places_matrix()
    trans_t = train_set.transient_matrix()
    n = len(train_set)

    order = model.trainable()
    params = model.parameters()
    state = AdamState.for_params(params, lr=cfg.lr)
    report = TrainingReport()
    for epoch in range(cfg.epochs):
        perm = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, cfg.batch):
            idx = perm[start:start + cfg.batch]
            total, pl, tl, grads = loss_and_grads(
                model, time_vec[idx], loc_vec[idx], overhead[idx], places_t[idx], trans_t[idx])
            flat = [g for name, _ in order for g in grads[name]]
            adam_step(state, params, flat)
            for _, net in order:
                net.version += 1
            sums += len(idx) * np.array([pl, tl, total])
        sums /= n
        report.places_loss.append(float(sums[0]))
        report.transient_loss.append(float(sums[1]))
        report.total_loss.append(float(sums[2]))
    return model, report


def checkpoint_dict(model: DynamicMapModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_json(),
        "params": {
            name: [
                {"activation": l.activation, "weights": l.weights.tolist(), "biases": l.biases.tolist()}
                for l in net.layers
            ]
            for name, net in model.trainable()
        },
    }


def save_checkpoint(model: DynamicMapModel, path) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(model)) + "\n", encoding="utf-8")


def model_from_checkpoint(obj, expected_dims: Dims | None = None) -> DynamicMapModel:
    if not isinstance(obj, dict) or "format_version" not in obj:
        raise CheckpointError("not a checkpoint object")
    if obj["format_version"] != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {obj['format_version']!r}")
    try:
        config = ModelConfig.from_json(obj["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad config: {exc}") from exc
    if expected_dims is not None and config.dims != expected_dims:
        raise CheckpointError(f"checkpoint dims {config.dims} do not match expected {expected_dims}")
    reference = build_model(config)
    params = obj.get("params")
    if not isinstance(params, dict) or set(params) != set(reference.nets):
        raise CheckpointError("checkpoint networks do not match its contexts")
    nets = {}
    for name, ref in reference.nets.items():
        try:
            layers = [DenseLayer(np.array(l["weights"], dtype=float), np.array(l["biases"], dtype=float), l["activation"])
                      for l in params[name]]
            net = Mlp(layers)
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"bad parameters for {name}: {exc}") from exc
        shapes = [p.shape for p in net.parameters()]
        if shapes != [p.shape for p in ref.parameters()] or [l.activation for l in net.layers] != [l.activation for l in ref.layers]:
            raise CheckpointError(f"{name}: parameter shapes do not match the config")
        if not all(np.all(np.isfinite(p)) for p in net.parameters()):
            raise CheckpointError(f"{name}: non-finite parameters")
        nets[name] = net
    return DynamicMapModel(config, nets)


def load_checkpoint(path, expected_dims: Dims | None = None) -> DynamicMapModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: cannot parse checkpoint ({exc})") from exc
    return model_from_checkpoint(obj, expected_dims)
