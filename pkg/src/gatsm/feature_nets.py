"""Time-shared feature functions: NBM basis networks plus Linear and NAM variants.

Each variant maps a feature matrix of shape ``(..., M)`` to transformed
features of the same shape. The same function is applied at every time step,
so equal raw values of feature ``m`` always map to equal outputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import ContractError, DimensionError, Tensor

VARIANTS = ("linear", "nam", "nbm")


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class DenseStack:
    """ReLU perceptron stack evaluated on ``(..., n, in)`` inputs.

    Weights may carry a leading group axis (one network per feature for NAM).
    Hidden layers run linear -> optional batch norm -> ReLU -> optional dropout;
    the last layer is linear.
    """

    weights: list[Tensor]
    biases: list[Tensor]
    batch_norm: bool = False
    dropout: float = 0.0
    momentum: float = 0.1
    eps: float = 1e-5
    gammas: list[Tensor] = field(default_factory=list)
    betas: list[Tensor] = field(default_factory=list)
    running_mean: list[np.ndarray] = field(default_factory=list)
    running_var: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def create(cls, rng, sizes: list[int], groups: int | None = None,
               batch_norm: bool = False, dropout: float = 0.0) -> "DenseStack":
        lead = () if groups is None else (groups,)
        stack = cls(weights=[], biases=[], batch_norm=batch_norm, dropout=dropout)
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            stack.weights.append(Tensor(uniform_init(rng, lead + (fan_in, fan_out), fan_in),
                                        requires_grad=True))
            stack.biases.append(Tensor(uniform_init(rng, lead + (1, fan_out), fan_in),
                                       requires_grad=True))
        if batch_norm:
            for width in sizes[1:-1]:
                stat_shape = lead + (1, width)
                stack.gammas.append(Tensor(np.ones(stat_shape), requires_grad=True))
                stack.betas.append(Tensor(np.zeros(stat_shape), requires_grad=True))
                stack.running_mean.append(np.zeros(stat_shape))
                stack.running_var.append(np.ones(stat_shape))
        return stack

    @property
    def out_features(self) -> int:
        return self.weights[-1].shape[-1]

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.{i}.weight"] = w
            out[f"{prefix}.{i}.bias"] = b
        for i, (g, b) in enumerate(zip(self.gammas, self.betas)):
            out[f"{prefix}.bn{i}.gamma"] = g
            out[f"{prefix}.bn{i}.beta"] = b
        return out

    def named_buffers(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, (m, v) in enumerate(zip(self.running_mean, self.running_var)):
            out[f"{prefix}.bn{i}.running_mean"] = m
            out[f"{prefix}.bn{i}.running_var"] = v
        return out

    def load_buffers(self, prefix: str, buffers: dict[str, np.ndarray]):
        for i in range(len(self.running_mean)):
            self.running_mean[i] = np.array(buffers[f"{prefix}.bn{i}.running_mean"])
            self.running_var[i] = np.array(buffers[f"{prefix}.bn{i}.running_var"])

    def __call__(self, h: Tensor, row_weights: np.ndarray | None = None,
                 training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i == last:
                break
            if self.batch_norm:
                h = self._norm(i, h, row_weights, training)
            h = h.relu()
            if training and self.dropout > 0:
                if rng is None:
                    raise ContractError("dropout during training needs an rng")
                keep = rng.random(h.shape) >= self.dropout
                h = h * (keep / (1.0 - self.dropout))
        return h

    def _norm(self, i: int, h: Tensor, row_weights, training: bool) -> Tensor:
        gamma, beta = self.gammas[i], self.betas[i]
        if not training:
            scale = 1.0 / np.sqrt(self.running_var[i] + self.eps)
            return (h - self.running_mean[i]) * scale * gamma + beta
        n = h.shape[-2]
        if row_weights is None:
            wts = np.full((n, 1), 1.0 / n)
        else:
            wts = np.asarray(row_weights, dtype=np.float64).reshape(n, 1)
            wts = wts / wts.sum()
        mean = (h * wts).sum(axis=-2, keepdims=True)
        centered = h - mean
        var = (centered * centered * wts).sum(axis=-2, keepdims=True)
        m = self.momentum
        self.running_mean[i] = (1 - m) * self.running_mean[i] + m * mean.data
        self.running_var[i] = (1 - m) * self.running_var[i] + m * var.data
        return centered / (var + self.eps).sqrt() * gamma + beta


class FeatureFunction:
    """Common surface of the three feature-function variants."""

    variant: str = ""
    n_features: int

    def named_parameters(self) -> dict[str, Tensor]:
        raise NotImplementedError

    def named_buffers(self) -> dict[str, np.ndarray]:
        return {}

    def load_buffers(self, buffers: dict[str, np.ndarray]):
        pass

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def _check(self, X: Tensor):
        if X.shape[-1] != self.n_features:
            raise DimensionError(
                f"expected {self.n_features} features, got {X.shape[-1]}")

    def __call__(self, X, cell_weights=None, training=False, rng=None) -> Tensor:
        X = X if isinstance(X, Tensor) else Tensor(X)
        self._check(X)
        return self.forward(X, cell_weights, training, rng)

    def forward(self, X: Tensor, cell_weights, training, rng) -> Tensor:
        raise NotImplementedError


class LinearFeatures(FeatureFunction):
    """``w_m * x + b_m`` per feature."""

    variant = "linear"

    def __init__(self, n_features: int, rng: np.random.Generator):
        self.n_features = n_features
        self.weight = Tensor(uniform_init(rng, (n_features,), 1), requires_grad=True)
        self.bias = Tensor(uniform_init(rng, (n_features,), 1), requires_grad=True)

    def named_parameters(self):
        return {"feature.linear.weight": self.weight, "feature.linear.bias": self.bias}

    def forward(self, X, cell_weights, training, rng):
        return X * self.weight + self.bias


class NAMFeatures(FeatureFunction):
    """One small network per feature, reused at every time step."""

    variant = "nam"

    def __init__(self, n_features: int, rng: np.random.Generator, hidden: list[int],
                 batch_norm: bool = False, dropout: float = 0.0):
        self.n_features = n_features
        self.hidden = list(hidden)
        self.net = DenseStack.create(rng, [1, *hidden, 1], groups=n_features,
                                     batch_norm=batch_norm, dropout=dropout)

    def named_parameters(self):
        return self.net.named_parameters("feature.nam")

    def named_buffers(self):
        return self.net.named_buffers("feature.nam")

    def load_buffers(self, buffers):
        self.net.load_buffers("feature.nam", buffers)

    def forward(self, X, cell_weights, training, rng):
        lead = X.shape[:-1]
        M = self.n_features
        cols = X.reshape(-1, M).transpose().reshape(M, -1, 1)
        rows = None if cell_weights is None else np.broadcast_to(
            np.asarray(cell_weights, dtype=np.float64), lead).reshape(-1)
        out = self.net(cols, rows, training, rng)
        return out.reshape(M, -1).transpose().reshape(*lead, M)


class NBMFeatures(FeatureFunction):
    """Shared basis network ``h: R -> R^B`` plus per-feature projection ``w_nbm``.

    ``x~[..., m] = sum_b h_b(x[..., m]) * w_nbm[m, b]``
    """

    variant = "nbm"

    def __init__(self, n_features: int, rng: np.random.Generator, hidden: list[int],
                 n_basis: int = 100, batch_norm: bool = False, dropout: float = 0.0):
        self.n_features = n_features
        self.hidden = list(hidden)
        self.n_basis = n_basis
        self.basis = DenseStack.create(rng, [1, *hidden, n_basis],
                                       batch_norm=batch_norm, dropout=dropout)
        self.w_nbm = Tensor(uniform_init(rng, (n_features, n_basis), n_basis),
                            requires_grad=True)

    def named_parameters(self):
        out = self.basis.named_parameters("feature.basis")
        out["feature.w_nbm"] = self.w_nbm
        return out

    def named_buffers(self):
        return self.basis.named_buffers("feature.basis")

    def load_buffers(self, buffers):
        self.basis.load_buffers("feature.basis", buffers)

    def basis_eval(self, x, training: bool = False, rng=None) -> np.ndarray:
        """Basis responses ``[h_1(x), ..., h_B(x)]``; a scalar gives shape ``(B,)``."""
        x = np.asarray(x, dtype=np.float64)
        h = self.basis(Tensor(x.reshape(-1, 1)), training=training, rng=rng)
        return h.data.reshape(*x.shape, self.n_basis)

    def forward(self, X, cell_weights, training, rng):
        lead = X.shape[:-1]
        M = self.n_features
        rows = None
        if cell_weights is not None:
            rows = np.broadcast_to(
                np.asarray(cell_weights, dtype=np.float64)[..., None], X.shape).reshape(-1)
        h = self.basis(X.reshape(-1, 1), rows, training, rng)
        h = h.reshape(*lead, M, self.n_basis)
        return (h * self.w_nbm).sum(axis=-1)


def basis_eval(x, params: FeatureFunction) -> np.ndarray:
    if not isinstance(params, NBMFeatures):
        raise ContractError(f"basis_eval needs the nbm variant, got {params.variant!r}")
    return params.basis_eval(x)


def make_feature_function(variant: str, n_features: int, rng: np.random.Generator,
                          hidden=(256, 256, 128), n_basis: int = 100,
                          batch_norm: bool = False, dropout: float = 0.0) -> FeatureFunction:
    variant = variant.lower()
    if variant == "linear":
        return LinearFeatures(n_features, rng)
    if variant == "nam":
        return NAMFeatures(n_features, rng, list(hidden), batch_norm, dropout)
    if variant == "nbm":
        return NBMFeatures(n_features, rng, list(hidden), n_basis, batch_norm, dropout)
    raise ValueError(f"unknown feature-function variant {variant!r}; choose from {VARIANTS}")
