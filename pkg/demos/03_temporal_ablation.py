# Why attention matters: the target is a value seen five steps before the end.
from gatsm import ModelConfig, Preprocessor, TrainConfig, build_variant, evaluate, train
from gatsm.datasets import gen_seasonal, split

data = gen_seasonal(600, period=5, horizon=20, noise=0.05, seed=0)
train_raw, val_raw, test_raw = split(data, seed=0)
pp = Preprocessor.fit(train_raw)
tr, va, te = (pp.transform(d) for d in (train_raw, val_raw, test_raw))

config = ModelConfig(hidden=(32, 32), n_basis=16, attn_hidden=64, attn_heads=4)
for variant in ("base", "base+pe", "base+mha", "full"):
    model = build_variant(data.n_features, variant, config=config, seed=0)
    model.preprocessor = pp
    train(model, tr, va, TrainConfig(batch_size=32, learning_rate=1e-2, patience=15,
                                     max_epochs=150))
    print(f"{variant:9s} test R2 {evaluate(model, te).r2:+.3f}")

# base and base+pe only see the current step, so they cannot read the lagged value
