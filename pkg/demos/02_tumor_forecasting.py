# Forecast next-step tumour size from size and treatment doses.
import time

from gatsm import ModelConfig, Preprocessor, TrainConfig, build_variant, evaluate, train
from gatsm.datasets import gen_tumor, split

data = gen_tumor(300, horizon=30, noise=0.01, seed=0)
train_raw, val_raw, test_raw = split(data, seed=0)
print(len(train_raw), "train /", len(val_raw), "val /", len(test_raw), "test series")

pp = Preprocessor.fit(train_raw)
tr, va, te = (pp.transform(d) for d in (train_raw, val_raw, test_raw))

# a reduced network keeps the run under a minute on one core
config = ModelConfig(hidden=(32, 32), n_basis=16, attn_hidden=32, attn_heads=4)
model = build_variant(data.n_features, "full", config=config, seed=0)
model.preprocessor = pp
model.feature_names = data.feature_names
print("parameters:", model.n_parameters())

start = time.perf_counter()
result = train(model, tr, va, TrainConfig(batch_size=32, learning_rate=5e-3, patience=10,
                                          max_epochs=100),
               on_epoch=lambda r: r["epoch"] % 10 == 0 and print(r))
print(f"stopped after {result.epochs_run} epochs ({time.perf_counter() - start:.0f}s), "
      f"best epoch {result.best_epoch}")
print("test metrics:", evaluate(model, te).to_dict())
