# Reverse-mode autograd on numpy arrays, checked against finite differences.
import numpy as np

from gatsm.autograd import Tensor, backward, softmax_masked
from gatsm.gradcheck import grad_check

rng = np.random.default_rng(0)
w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
x = Tensor(rng.normal(size=(4, 3)))

loss = ((x @ w).tanh() ** 2).sum()
backward(loss)
print("loss", loss.item())
print("dloss/dw\n", w.grad)

# the same gradient by central differences
err = grad_check(lambda: ((x @ w).tanh() ** 2).sum(), [w])
print("max relative gradient error", err)

# masked softmax: blocked positions get exactly zero weight
logits = Tensor(rng.normal(size=(3, 3)))
keep = np.tril(np.ones((3, 3), bool))
print("causal attention rows\n", softmax_masked(logits, keep).data)
