# How many shared basis functions does the feature network need?
from gatsm import ModelConfig, Preprocessor, TrainConfig, build_variant, evaluate, train
from gatsm.datasets import gen_tumor, split

data = gen_tumor(200, horizon=20, seed=3)
train_raw, val_raw, test_raw = split(data, seed=3)
pp = Preprocessor.fit(train_raw)
tr, va, te = (pp.transform(d) for d in (train_raw, val_raw, test_raw))

for n_basis in (1, 4, 16, 64):
    config = ModelConfig(hidden=(32, 32), n_basis=n_basis, attn_hidden=32, attn_heads=4)
    model = build_variant(3, "full", config=config, seed=3)
    model.preprocessor = pp
    train(model, tr, va, TrainConfig(batch_size=32, learning_rate=5e-3, patience=10,
                                     max_epochs=80))
    print(f"B={n_basis:3d}  params {model.n_parameters():6d}  test R2 {evaluate(model, te).r2:.4f}")
