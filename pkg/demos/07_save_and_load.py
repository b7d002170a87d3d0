# Archives restore a model bit for bit and refuse damaged files.
import numpy as np

from gatsm import persistence
from gatsm.model import GATSM, ModelConfig

model = GATSM(3, config=ModelConfig(hidden=(16, 16), n_basis=8), seed=0)
persistence.save(model, "model.gatsm")
restored = persistence.load("model.gatsm")

x = np.random.default_rng(0).normal(size=(10, 3))
print("identical predictions:", np.array_equal(model.predict(x), restored.predict(x)))

buf = bytearray(open("model.gatsm", "rb").read())
buf[-3] ^= 0xFF
try:
    persistence.from_bytes(bytes(buf))
except persistence.ChecksumError as exc:
    print("damaged archive rejected:", exc)
