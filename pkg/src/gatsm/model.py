"""The assembled additive time-series model and its ablation variants."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .autograd import ContractError, DimensionError, Tensor
from .feature_nets import FeatureFunction, make_feature_function, uniform_init
from .temporal import TemporalModule, batch_causal_mask

TASKS = ("regression", "binary", "multiclass")
TEMPORAL_VARIANTS = {
    "base": (False, False),
    "base+pe": (True, False),
    "base+mha": (False, True),
    "full": (True, True),
}


class ConfigError(ValueError):
    """Model or training configuration is invalid."""


@dataclass
class ModelConfig:
    feature_variant: str = "nbm"
    hidden: tuple[int, ...] = (256, 256, 128)
    n_basis: int = 100
    nbm_batch_norm: bool = False
    nbm_dropout: float = 0.0
    attn_hidden: int = 64
    attn_heads: int = 4
    attn_dropout: float = 0.0
    attn_slope: float = 0.2
    use_pe: bool = True
    use_mha: bool = True

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.feature_variant = self.feature_variant.lower()
        if self.feature_variant not in ("linear", "nam", "nbm"):
            raise ConfigError(f"unknown feature variant {self.feature_variant!r}")
        if self.n_basis < 1:
            raise ConfigError("n_basis must be >= 1")
        if self.attn_hidden < 1 or self.attn_heads < 1:
            raise ConfigError("attention hidden size and head count must be >= 1")
        for name in ("nbm_dropout", "attn_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def output_dim(task: str, n_classes: int | None = None) -> int:
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; choose from {TASKS}")
    if task == "multiclass":
        if not n_classes or n_classes < 2:
            raise ConfigError("multiclass tasks need n_classes >= 2")
        return n_classes
    return 1


class GATSM:
    """Generalized additive time-series model.

    The score at step ``t`` is ``sum_k a[k, t, :] @ X~ @ w_out[k]`` where
    ``X~`` are the time-shared feature-function outputs and ``a`` the masked
    attention maps. Without attention (``use_mha=False``) a single head that
    looks only at the current step is used, which is a plain GAM per step.

    Step indices passed to :meth:`decompose` and the interpretation helpers
    are 1-based, counting observed steps.
    """

    def __init__(self, n_features: int, task: str = "regression", n_classes: int | None = None,
                 config: ModelConfig | None = None, seed: int = 0):
        self.config = config or ModelConfig()
        self.task = task
        self.n_classes = n_classes
        self.n_outputs = output_dim(task, n_classes)
        self.n_features = n_features
        self.seed = seed
        self.preprocessor = None
        self.feature_names: list[str] | None = None
        cfg = self.config
        rng = np.random.default_rng(seed)
        self.feature: FeatureFunction = make_feature_function(
            cfg.feature_variant, n_features, rng, hidden=cfg.hidden, n_basis=cfg.n_basis,
            batch_norm=cfg.nbm_batch_norm, dropout=cfg.nbm_dropout)
        self.temporal = None
        if cfg.use_mha:
            self.temporal = TemporalModule(n_features, cfg.attn_hidden, cfg.attn_heads, rng,
                                           use_pe=cfg.use_pe, slope=cfg.attn_slope,
                                           dropout=cfg.attn_dropout)
        self.w_out = Tensor(uniform_init(rng, (self.heads, n_features, self.n_outputs),
                                         n_features), requires_grad=True)

    @property
    def heads(self) -> int:
        return self.config.attn_heads if self.config.use_mha else 1

    # -- parameters -------------------------------------------------------
    def named_parameters(self) -> dict[str, Tensor]:
        out = dict(self.feature.named_parameters())
        if self.temporal is not None:
            out.update(self.temporal.named_parameters())
        out["output.w_out"] = self.w_out
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def named_buffers(self) -> dict[str, np.ndarray]:
        return self.feature.named_buffers()

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: p.data.copy() for k, p in self.named_parameters().items()}
        state.update({k: np.array(v) for k, v in self.named_buffers().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.named_parameters()
        buffers = self.named_buffers()
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise DimensionError(f"{name}: expected shape {p.shape}, got {value.shape}")
            arr = value.copy()
            arr.flags.writeable = False
            p.data = arr
        self.feature.load_buffers({k: state[k] for k in buffers})

    # -- forward ----------------------------------------------------------
    def _prepare(self, X, lengths):
        X = np.asarray(X.data if isinstance(X, Tensor) else X, dtype=np.float64)
        single = X.ndim == 2
        if single:
            X = X[None]
        if X.ndim != 3:
            raise DimensionError(f"expected (T, M) or (N, T, M) input, got shape {X.shape}")
        if X.shape[-1] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {X.shape[-1]}")
        N, T, _ = X.shape
        if lengths is None:
            lengths = np.full(N, T)
        lengths = np.atleast_1d(np.asarray(lengths, dtype=np.int64))
        if lengths.shape != (N,) or np.any(lengths < 1) or np.any(lengths > T):
            raise ContractError(f"lengths must be {N} values in [1, {T}]")
        valid = np.arange(T)[None, :] < lengths[:, None]
        if not np.isfinite(X[valid]).all():
            raise ContractError("input has non-finite values at valid steps; preprocess first")
        X = np.where(valid[..., None], X, 0.0)
        return X, lengths, valid, single

    def forward(self, X, lengths=None, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        """Raw scores with shape ``(N, T, C)``; padded steps score 0."""
        X, lengths, valid, _ = self._prepare(X, lengths)
        out, _, _ = self._forward(X, lengths, valid, training, rng)
        return out

    def _forward(self, X, lengths, valid, training, rng):
        Xt = self.feature(Tensor(X), valid, training, rng)
        XW = Xt.expand_dims(1) @ self.w_out              # (N, K, T, C)
        if self.temporal is None:
            out = XW.sum(axis=1) * valid[..., None]
            return out, Xt, None
        V = self.temporal.project_values(Xt)
        keep = batch_causal_mask(X.shape[1], lengths)
        a = self.temporal.attention_maps(V, keep, training, rng, allow_empty_rows=True)
        out = (a @ XW).sum(axis=1)
        return out, Xt, a

    __call__ = forward

    def predict(self, X, lengths=None) -> np.ndarray:
        """Evaluation-mode scores; ``(T, C)`` for a single series, else ``(N, T, C)``."""
        X, lengths, valid, single = self._prepare(X, lengths)
        out, _, _ = self._forward(X, lengths, valid, False, None)
        return out.data[0] if single else out.data

    def transformed_features(self, X, lengths=None) -> np.ndarray:
        X, lengths, valid, single = self._prepare(X, lengths)
        Xt = self.feature(Tensor(X), valid, False, None).data
        return Xt[0] if single else Xt

    def attention(self, X, lengths=None) -> np.ndarray:
        """Attention maps ``(N, K, T, T)``; without attention, current-step identity."""
        X, lengths, valid, single = self._prepare(X, lengths)
        if self.temporal is None:
            T = X.shape[1]
            a = (np.eye(T)[None] * valid[:, :, None])[:, None]
        else:
            _, _, a = self._forward(X, lengths, valid, False, None)
            a = a.data
        return a[0] if single else a

    # -- additive decomposition -------------------------------------------
    def _components(self, x, length):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionError(f"expected a single (T, M) series, got shape {x.shape}")
        length = x.shape[0] if length is None else int(length)
        a = self.attention(x, length)                     # (K, T, T)
        Xt = self.transformed_features(x, length)         # (T, M)
        return a, Xt, length

    def decompose(self, x, length=None, t: int | None = None) -> np.ndarray:
        """Per-(step, feature, channel) contributions to the score at step ``t``.

        Returns shape ``(t, M, C)``; entry ``(u, m, c)`` is
        ``sum_k a[k, t, u] * x~[u, m] * w_out[k, m, c]`` and the full sum equals
        the score at ``t``.
        """
        a, Xt, length = self._components(x, length)
        t = length if t is None else int(t)
        if not 1 <= t <= length:
            raise IndexError(f"step t={t} outside 1..{length}")
        w = self.w_out.data
        return np.einsum("ku,um,kmc->umc", a[:, t - 1, :t], Xt[:t], w)

    def time_independent(self, x, length=None, per_head: bool = False) -> np.ndarray:
        """``x~[u, m] * w_out[k, m, c]`` summed over heads: shape ``(T, M, C)``.

        With ``per_head`` the head axis is kept: ``(K, T, M, C)``.
        """
        _, Xt, length = self._components(x, length)
        terms = np.einsum("um,kmc->kumc", Xt[:length], self.w_out.data)
        return terms if per_head else terms.sum(axis=0)


def build_variant(n_features: int, variant: str = "full", task: str = "regression",
                  n_classes: int | None = None, config: ModelConfig | None = None,
                  seed: int = 0) -> GATSM:
    """Build one of the temporal ablations: base, base+pe, base+mha, full.

    ``base+pe`` keeps the positional-encoding flag but, with no attention, the
    encoding has no route to the output, so it predicts exactly like ``base``.
    """
    key = variant.lower().replace(" ", "")
    if key not in TEMPORAL_VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {list(TEMPORAL_VARIANTS)}")
    use_pe, use_mha = TEMPORAL_VARIANTS[key]
    base = config or ModelConfig()
    cfg = ModelConfig.from_dict({**base.to_dict(), "use_pe": use_pe, "use_mha": use_mha})
    return GATSM(n_features, task, n_classes, cfg, seed)
