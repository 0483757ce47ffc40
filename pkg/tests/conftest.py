import numpy as np
import pytest

from dynmap.dataset import Dataset, Dims, make_record
from dynmap.model import ModelConfig, build_model

TINY = dict(encoder_widths=(5, 6, 4), head_widths=(5, 4), estimator_widths=(6, 5))


def tiny_config(contexts=("sat", "time", "loc"), dims=Dims(4, 3, 2), seed=0, **kw):
    return ModelConfig(contexts=contexts, dims=dims, seed=seed, **{**TINY, **kw})


def tiny_model(contexts=("sat", "time", "loc"), dims=Dims(4, 3, 2), seed=0, **kw):
    return build_model(tiny_config(contexts, dims, seed, **kw))


def random_dataset(n, dims=Dims(4, 3, 2), seed=0, prefix="r"):
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        p = rng.dirichlet(np.ones(dims.places))
        recs.append(make_record(
            f"{prefix}{i}", rng.uniform(-80, 80), rng.uniform(-179, 179),
            int(rng.integers(1, 13)), int(rng.integers(0, 24)),
            rng.normal(size=dims.overhead), p, rng.uniform(0, 1, dims.transient),
        ))
    return Dataset(dims, tuple(recs))


@pytest.fixture
def small_dataset():
    return random_dataset(20)


# Pinned desk-scale world shared by the slow tests and the acceptance suite.
ABLATION_WORLD = dict(dims=Dims(16, 10, 6), n_scene_cells=64, noise_sigma=0.1, seed=1)
ABLATION_CONTEXTS = [
    ("sat", "time", "loc"),
    ("sat", "loc"),
    ("loc",),
    ("sat", "time"),
    ("sat",),
]


class AblationRun:
    def __init__(self):
        import time

        start = time.perf_counter()
        from dynmap.evaluation import evaluate_predictions
        from dynmap.model import predict_records, train
        from dynmap.synth import WorldConfig, generate_world

        self.world = WorldConfig(**ABLATION_WORLD)
        data = generate_world(self.world, 6000)
        self.train_set = data.subset(range(5000))
        self.test_set = data.subset(range(5000, 6000))
        self.models, self.reports, self.metrics = {}, {}, {}
        for ctx in ABLATION_CONTEXTS:
            cfg = ModelConfig(contexts=ctx, dims=self.world.dims, seed=0)
            model, report = train(build_model(cfg), self.train_set)
            places, transient = predict_records(model, self.test_set)
            self.models[ctx] = model
            self.reports[ctx] = report
            self.metrics[ctx] = {
                k: 100 * v for k, v in evaluate_predictions(
                    places, transient, self.test_set.places_matrix(), self.test_set.transient_matrix()).items()
            }
        self.seconds = time.perf_counter() - start


@pytest.fixture(scope="session")
def ablation_run():
    return AblationRun()


ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> None:
    """Log one acceptance line for the terminal summary, then assert it."""
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
