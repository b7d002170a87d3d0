"""Positional encoding, causal masking and masked two-layer additive attention."""
from __future__ import annotations

import numpy as np

from .autograd import ContractError, DimensionError, Tensor, softmax_masked
from .feature_nets import uniform_init


def positional_encoding(T: int, D: int) -> np.ndarray:
    """Sinusoidal table of shape ``(T, D)`` using 1-based step and channel indices.

    Channel ``j`` holds ``sin(i / 10000**(2j/D))`` for odd ``j`` and ``cos`` of
    the same argument for even ``j``.
    """
    if T < 1 or D < 1:
        raise ValueError(f"positional_encoding needs T, D >= 1, got {T}, {D}")
    i = np.arange(1, T + 1, dtype=np.float64)[:, None]
    j = np.arange(1, D + 1, dtype=np.float64)[None, :]
    angle = i / np.power(10000.0, 2.0 * j / D)
    return np.where(j % 2 == 1, np.sin(angle), np.cos(angle))


def causal_mask(T: int, length: int | None = None) -> np.ndarray:
    """Boolean keep-matrix: ``(i, j)`` kept iff ``j <= i <= length``."""
    if length is None:
        length = T
    if not 1 <= length <= T:
        raise ValueError(f"length must lie in [1, {T}], got {length}")
    idx = np.arange(T)
    valid = idx < length
    return (idx[:, None] >= idx[None, :]) & valid[:, None] & valid[None, :]


def batch_causal_mask(T: int, lengths) -> np.ndarray:
    """Stack of :func:`causal_mask` for each length, shape ``(N, T, T)``."""
    lengths = np.asarray(lengths)
    if np.any(lengths < 1) or np.any(lengths > T):
        raise ValueError(f"lengths must lie in [1, {T}]")
    idx = np.arange(T)
    valid = idx[None, :] < lengths[:, None]
    lower = idx[:, None] >= idx[None, :]
    return lower[None] & valid[:, :, None] & valid[:, None, :]


class TemporalModule:
    """Value projection plus ``K`` additive attention heads.

    Head ``k`` scores the pair ``(i, j)`` as ``act([v_i | v_j] . w_k)`` where
    ``w_k`` has length ``2D``; blocked pairs receive a ``-inf`` logit.
    """

    def __init__(self, n_features: int, hidden: int, heads: int, rng: np.random.Generator,
                 use_pe: bool = True, slope: float = 0.2, dropout: float = 0.0):
        self.n_features = n_features
        self.hidden = hidden
        self.heads = heads
        self.use_pe = use_pe
        self.slope = slope
        self.dropout = dropout
        self.Z = Tensor(uniform_init(rng, (n_features, hidden), n_features), requires_grad=True)
        self.w_attn = Tensor(uniform_init(rng, (heads, 2 * hidden), 2 * hidden),
                             requires_grad=True)

    def named_parameters(self) -> dict[str, Tensor]:
        return {"temporal.Z": self.Z, "temporal.w_attn": self.w_attn}

    def project_values(self, Xt) -> Tensor:
        """``v_i = x~_i Z (+ pe_i)`` for input ``(..., T, M)``."""
        Xt = Xt if isinstance(Xt, Tensor) else Tensor(Xt)
        if Xt.shape[-1] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {Xt.shape[-1]}")
        V = Xt @ self.Z
        if self.use_pe:
            V = V + positional_encoding(Xt.shape[-2], self.hidden)
        return V

    def attention_logits(self, V: Tensor) -> Tensor:
        """Pre-mask scores ``act([v_i | v_j] . w_k)`` with shape ``(..., K, T, T)``."""
        D = self.hidden
        w_query = self.w_attn[:, :D].transpose()   # (D, K)
        w_key = self.w_attn[:, D:].transpose()
        s_query = (V @ w_query).swapaxes(-1, -2)   # (..., K, T)
        s_key = (V @ w_key).swapaxes(-1, -2)
        e = s_query.expand_dims(-1) + s_key.expand_dims(-2)
        return e.leaky_relu(self.slope)

    def attention_maps(self, V, keep: np.ndarray, training: bool = False,
                       rng: np.random.Generator | None = None,
                       allow_empty_rows: bool = False) -> Tensor:
        """Masked softmax over key steps; ``keep`` is ``(T, T)`` or ``(N, T, T)``."""
        V = V if isinstance(V, Tensor) else Tensor(V)
        keep = np.asarray(keep, dtype=bool)
        logits = self.attention_logits(V)
        mask = keep[..., None, :, :]
        a = softmax_masked(logits, mask, axis=-1, allow_empty_rows=allow_empty_rows)
        if training and self.dropout > 0:
            if rng is None:
                raise ContractError("attention dropout during training needs an rng")
            drop = rng.random(a.shape) >= self.dropout
            a = a * (drop / (1.0 - self.dropout))
        return a
