# coding: utf-8

# # Training the conditional model and ablating its contexts
#
# The model predicts scene and transient attributes from an overhead feature
# ("sat"), the capture time ("time") and the location ("loc"). Dropping
# contexts shows what each one contributes. A small run keeps this under a
# minute; the test suite trains the full-size version.

from dynmap.evaluation import evaluate_predictions
from dynmap.model import ModelConfig, build_model, predict_records, train
from dynmap.synth import WorldConfig, generate_world

data = generate_world(WorldConfig(seed=1), 2500)
train_set, test_set = data.subset(range(2000)), data.subset(range(2000, 2500))

results = {}
for contexts in [("sat", "time", "loc"), ("sat", "time"), ("sat",), ("loc",)]:
    config = ModelConfig(contexts=contexts, dims=data.dims, epochs=5, seed=0)
    model, report = train(build_model(config), train_set)
    places, transient = predict_records(model, test_set)
    results[config.name] = evaluate_predictions(
        places, transient, test_set.places_matrix(), test_set.transient_matrix())
    print(f"{config.name:14s} final loss {report.total_loss[-1]:.4f}")

# Places Top-1 only needs the scene, so any model that sees the overhead
# feature gets it. Transient accuracy needs time and, through latitude, location.

print(f"{'model':14s} {'top1':>6s} {'within0.1':>10s}")
for name, m in results.items():
    print(f"{name:14s} {100 * m['top1']:6.1f} {100 * m['within0.1']:10.1f}")

# Training is bit-for-bit reproducible for a given seed.

a, _ = train(build_model(ModelConfig(dims=data.dims, epochs=1)), train_set.subset(range(200)))
b, _ = train(build_model(ModelConfig(dims=data.dims, epochs=1)), train_set.subset(range(200)))
print("identical weights:", all((x == y).all() for x, y in zip(a.parameters(), b.parameters())))
