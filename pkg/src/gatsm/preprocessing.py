"""Ordinal encoding, imputation and standardization fitted on the training split."""
from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset, Sample

MIN_STD = 1e-12


@dataclass
class Preprocessor:
    kinds: list[str]
    mean: np.ndarray
    std: np.ndarray
    impute: np.ndarray
    categories: dict[int, list[str]] = field(default_factory=dict)
    target_mean: float = 0.0
    target_std: float = 1.0

    @classmethod
    def fit(cls, train: Dataset) -> "Preprocessor":
        """Pool every observed (series, step) cell per feature; population statistics."""
        if len(train) == 0:
            raise ValueError("cannot fit a preprocessor on an empty split")
        M = train.n_features
        kinds = [f.kind for f in train.features]
        mean, std, impute = np.zeros(M), np.ones(M), np.zeros(M)
        categories = {}
        for j in range(M):
            observed = [s.x[t, j] for s in train.samples for t in range(s.length)
                        if not s.missing[t, j]]
            if kinds[j] == "categorical":
                levels = sorted({str(v) for v in observed})
                categories[j] = levels
                codes = np.array([levels.index(str(v)) for v in observed], dtype=np.float64)
                counts = Counter(str(v) for v in observed)
                mode = max(levels, key=lambda v: (counts[v], -levels.index(v))) if levels else None
                values = codes
                impute[j] = 0.0 if mode is None else levels.index(mode)
            else:
                values = np.asarray(observed, dtype=np.float64)
            if values.size:
                mean[j] = values.mean()
                sd = values.std()
                std[j] = sd if sd >= MIN_STD else 1.0
            if kinds[j] == "numeric":
                impute[j] = mean[j]
        tmean, tstd = 0.0, 1.0
        if train.task == "regression":
            targets = np.concatenate([np.atleast_1d(np.asarray(s.y, dtype=np.float64))
                                      for s in train.samples])
            tmean = float(targets.mean())
            sd = float(targets.std())
            tstd = sd if sd >= MIN_STD else 1.0
        return cls(kinds, mean, std, impute, categories, tmean, tstd)

    @property
    def n_features(self) -> int:
        return len(self.kinds)

    def encode(self, x: np.ndarray, missing: np.ndarray) -> np.ndarray:
        """Raw ``(T, M)`` cells -> imputed, encoded, standardized float array."""
        T, M = x.shape
        out = np.empty((T, M))
        for j in range(M):
            col = x[:, j]
            if self.kinds[j] == "categorical":
                lookup = {v: i for i, v in enumerate(self.categories[j])}
                vals = np.empty(T)
                for t in range(T):
                    if missing[t, j]:
                        vals[t] = self.impute[j]
                    elif str(col[t]) in lookup:
                        vals[t] = lookup[str(col[t])]
                    else:
                        warnings.warn(f"unseen category {col[t]!r} in feature {j}; imputed",
                                      stacklevel=3)
                        vals[t] = self.impute[j]
            else:
                vals = np.where(missing[:, j], self.impute[j], col.astype(np.float64))
            out[:, j] = (vals - self.mean[j]) / self.std[j]
        return out

    def transform(self, dataset: Dataset) -> Dataset:
        samples = []
        for s in dataset.samples:
            y = s.y
            if dataset.task == "regression":
                y = self.scale_target(np.asarray(s.y, dtype=np.float64))
                y = y if dataset.per_step else float(y)
            samples.append(Sample(x=self.encode(s.x, s.missing), y=y,
                                  missing=s.missing.copy(), id=s.id))
        return Dataset(samples, list(dataset.features), dataset.task, dataset.n_classes,
                       dataset.per_step, dataset.target_name, preprocessed=True)

    apply = transform

    def scale_target(self, y):
        return (np.asarray(y, dtype=np.float64) - self.target_mean) / self.target_std

    def unscale_target(self, y):
        return np.asarray(y, dtype=np.float64) * self.target_std + self.target_mean

    def standardize(self, j: int, raw) -> np.ndarray:
        """Numeric (or already-ordinal) raw values of feature ``j`` to model scale."""
        return (np.asarray(raw, dtype=np.float64) - self.mean[j]) / self.std[j]

    def destandardize(self, j: int, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std[j] + self.mean[j]

    def to_dict(self) -> dict:
        return {
            "kinds": list(self.kinds),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "impute": self.impute.tolist(),
            "categories": {str(k): v for k, v in self.categories.items()},
            "target_mean": self.target_mean,
            "target_std": self.target_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Preprocessor":
        return cls(list(d["kinds"]), np.array(d["mean"], dtype=np.float64),
                   np.array(d["std"], dtype=np.float64), np.array(d["impute"], dtype=np.float64),
                   {int(k): list(v) for k, v in d["categories"].items()},
                   float(d["target_mean"]), float(d["target_std"]))


def fit_preprocessor(train: Dataset) -> Preprocessor:
    return Preprocessor.fit(train)
