# The three interpretation views of a trained model, and why they are exact.
import numpy as np

from gatsm import ModelConfig, Preprocessor, TrainConfig, build_variant, train
from gatsm.datasets import gen_tumor, split
from gatsm.interpret import build_report, global_curve, time_step_importance

data = gen_tumor(200, horizon=20, seed=2)
train_raw, val_raw, test_raw = split(data, seed=2)
pp = Preprocessor.fit(train_raw)
config = ModelConfig(hidden=(32, 32), n_basis=16, attn_hidden=32, attn_heads=4)
model = build_variant(3, "full", config=config, seed=2)
model.preprocessor = pp
model.feature_names = data.feature_names
train(model, pp.transform(train_raw), pp.transform(val_raw),
      TrainConfig(batch_size=32, learning_rate=5e-3, patience=10, max_epochs=60))

# 1. which past steps matter for the final forecast
imp = time_step_importance(model, test_raw, t=20)
print("attention on the last five steps:", np.round(imp.values[-5:], 3))

# 2. global effect of each feature over its training range
for name in data.feature_names:
    c = global_curve(model, name, train_raw, grid_size=5)
    print(f"{name:11s}", np.round(c.contribution, 3))

# 3. local contributions for one series; they add up to the prediction
report = build_report(model, test_raw, sample=0, step=20)
print("score", report.score, "sum of contributions", report.time_dependent.sum())
report.save_json("interpretation.json")
report.save_csv("interpretation.csv")
print("wrote interpretation.json and interpretation.csv")
