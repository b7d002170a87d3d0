"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .autograd import Tensor, backward


class ProbeError(RuntimeError):
    """The checked function returned a non-finite value at a probe point."""


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5,
               exclude: Mapping[int, np.ndarray] | None = None,
               per_param: bool = False):
    """Compare backprop gradients of ``f`` against central differences.

    ``f`` takes no arguments and rebuilds its graph from ``params`` each call.
    Probing swaps each parameter's buffer in place, so ``f`` must read the
    parameters' ``.data`` lazily. ``exclude`` maps a parameter position to a
    boolean array of entries to skip.

    Returns the max over all probed entries of
    ``|analytic - numeric| / max(1, |analytic|)``; with ``per_param`` a list of
    per-parameter maxima is returned instead.
    """
    for p in params:
        p.grad = None
    out = f()
    if not np.isfinite(out.data).all():
        raise ProbeError("non-finite value at the base point")
    backward(out)
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]

    errors = []
    for pos, p in enumerate(params):
        skip = None if exclude is None else exclude.get(pos)
        base = p.data.copy()
        worst = 0.0
        for idx in np.ndindex(*p.shape):
            if skip is not None and skip[idx]:
                continue
            values = []
            for delta in (step, -step):
                probe = base.copy()
                probe[idx] += delta
                _swap(p, probe)
                val = float(f().data)
                if not np.isfinite(val):
                    _swap(p, base)
                    raise ProbeError(f"non-finite value probing parameter {pos} at {idx}")
                values.append(val)
            numeric = (values[0] - values[1]) / (2 * step)
            a = analytic[pos][idx]
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
        _swap(p, base)
        errors.append(worst)
    for p in params:
        p.grad = None
    return errors if per_param else max(errors, default=0.0)


def _swap(p: Tensor, values: np.ndarray):
    arr = np.array(values, dtype=np.float64)
    arr.flags.writeable = False
    p.data = arr
