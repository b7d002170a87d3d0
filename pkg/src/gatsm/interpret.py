"""Time-step importance, global feature curves and local contributions.

All local quantities are in score space (before the link function) so they add
up exactly to the model's raw output.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .model import GATSM

REPORT_SCHEMA = "gatsm-interpretation"
REPORT_VERSION = 1


class EmptySelectionError(ValueError):
    """No sample qualifies for the requested statistic."""


@dataclass
class StepImportance:
    values: np.ndarray          # (t,) head-summed attention averaged over samples
    n_used: int
    n_skipped: int


@dataclass
class GlobalCurve:
    feature: str
    grid: np.ndarray            # raw feature values
    contribution: np.ndarray    # score contribution at each grid value
    density: np.ndarray         # histogram counts of training values
    bin_edges: np.ndarray


def _prepared(model: GATSM, data: Dataset) -> Dataset:
    if data.preprocessed:
        return data
    if model.preprocessor is None:
        raise ValueError("raw data given but the model has no fitted preprocessor")
    return model.preprocessor.transform(data)


def _feature_index(model: GATSM, feature) -> int:
    if isinstance(feature, (int, np.integer)):
        if not 0 <= feature < model.n_features:
            raise KeyError(f"feature index {feature} out of range")
        return int(feature)
    names = model.feature_names or []
    if feature not in names:
        raise KeyError(f"unknown feature {feature!r}")
    return names.index(feature)


def time_step_importance(model: GATSM, data: Dataset, t: int) -> StepImportance:
    """Mean over samples of ``sum_k a[k, t, u]`` for ``u = 1..t``.

    Samples shorter than ``t`` are skipped, not padded.
    """
    data = _prepared(model, data)
    keep = [i for i, s in enumerate(data.samples) if s.length >= t]
    if t < 1 or not keep:
        raise EmptySelectionError(f"no sample has at least {t} steps")
    X, lengths, _ = data.arrays(keep)
    a = model.attention(X, lengths)                      # (N, K, T, T)
    rows = a[:, :, t - 1, :t].sum(axis=1)                # (N, t)
    return StepImportance(rows.mean(axis=0), len(keep), len(data) - len(keep))


def feature_contribution(model: GATSM, m: int, z, channel: int = 0) -> np.ndarray:
    """Time-independent contribution of feature ``m`` at standardized values ``z``:
    ``f_m(z) * sum_k w_out[k, m, channel]``."""
    z = np.asarray(z, dtype=np.float64).ravel()
    X = np.zeros((z.size, model.n_features))
    X[:, m] = z
    Xt = model.transformed_features(X)
    return Xt[:, m] * model.w_out.data[:, m, channel].sum()


def global_curve(model: GATSM, feature, train_data: Dataset, grid_size: int = 256,
                 bins: int = 64, channel: int = 0) -> GlobalCurve:
    """Contribution curve over the observed raw range of ``feature`` in ``train_data``.

    ``train_data`` is the raw (unstandardized) training split; categorical
    features are evaluated at each ordinal code.
    """
    m = _feature_index(model, feature)
    pp = model.preprocessor
    if train_data.preprocessed:
        values = np.concatenate([s.x[~s.missing[:, m], m] for s in train_data.samples])
        if pp is not None:
            values = pp.destandardize(m, values)
    else:
        cells = [s.x[t, m] for s in train_data.samples for t in range(s.length)
                 if not s.missing[t, m]]
        if pp is not None and pp.kinds[m] == "categorical":
            levels = pp.categories[m]
            cells = [levels.index(str(v)) for v in cells if str(v) in levels]
        values = np.asarray(cells, dtype=np.float64)
    if values.size == 0:
        raise EmptySelectionError(f"feature {feature!r} has no observed training values")
    lo, hi = float(values.min()), float(values.max())
    if pp is not None and pp.kinds[m] == "categorical":
        grid = np.arange(len(pp.categories[m]), dtype=np.float64)
    else:
        grid = np.linspace(lo, hi, grid_size)
    z = grid if pp is None else pp.standardize(m, grid)
    density, edges = np.histogram(values, bins=bins, range=(lo, hi) if hi > lo else None)
    name = model.feature_names[m] if model.feature_names else str(m)
    return GlobalCurve(name, grid, feature_contribution(model, m, z, channel),
                       density, edges)


def local_time_independent(model: GATSM, x, length=None, channel: int = 0) -> np.ndarray:
    """``(T, M)`` feature contributions ignoring attention."""
    return model.time_independent(x, length)[..., channel]


def local_time_dependent(model: GATSM, x, t: int, length=None, channel: int = 0) -> np.ndarray:
    """``(t, M)`` attention-weighted contributions; they sum to the score at ``t``."""
    return model.decompose(x, length, t)[..., channel]


@dataclass
class InterpretationReport:
    feature_names: list[str]
    sample_id: str
    step: int
    channel: int
    score: float
    importance: np.ndarray
    time_independent: np.ndarray
    time_dependent: np.ndarray
    curves: list[GlobalCurve] = field(default_factory=list)
    n_skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "metadata": {
                "feature_names": self.feature_names,
                "sample_id": self.sample_id,
                "step": self.step,
                "channel": self.channel,
                "score": self.score,
                "importance_samples_skipped": self.n_skipped,
            },
            "time_step_importance": self.importance.tolist(),
            "local_time_independent": self.time_independent.tolist(),
            "local_time_dependent": self.time_dependent.tolist(),
            "global_curves": [
                {"feature": c.feature, "grid": c.grid.tolist(),
                 "contribution": c.contribution.tolist(), "density": c.density.tolist(),
                 "bin_edges": c.bin_edges.tolist()}
                for c in self.curves
            ],
        }

    def save_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    def save_csv(self, path):
        """One row per (step, feature): both contribution kinds side by side."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id", "query_step", "step", "feature",
                        "time_independent", "time_dependent"])
            for u in range(self.time_dependent.shape[0]):
                for m, name in enumerate(self.feature_names):
                    w.writerow([self.sample_id, self.step, u + 1, name,
                                repr(float(self.time_independent[u, m])),
                                repr(float(self.time_dependent[u, m]))])


def load_report(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"{path}: not an interpretation report")
    if doc.get("version", 0) > REPORT_VERSION:
        raise ValueError(f"{path}: report version {doc['version']} is newer than supported")
    return doc


def build_report(model: GATSM, data: Dataset, sample: int, step: int | None = None,
                 train_data: Dataset | None = None, channel: int = 0,
                 grid_size: int = 256, bins: int = 64) -> InterpretationReport:
    """Gather every interpretation for one sample at query step ``step`` (1-based).

    Importance is averaged over all of ``data``; global curves use
    ``train_data`` when given.
    """
    prepared = _prepared(model, data)
    s = prepared.samples[sample]
    step = s.length if step is None else step
    if not 1 <= step <= s.length:
        raise IndexError(f"step {step} outside 1..{s.length} for sample {sample}")
    x = np.asarray(s.x, dtype=np.float64)
    td = local_time_dependent(model, x, step, s.length, channel)
    ti = local_time_independent(model, x, s.length, channel)
    score = float(model.predict(x, s.length)[step - 1, channel])
    imp = time_step_importance(model, prepared, step)
    curves = []
    if train_data is not None:
        curves = [global_curve(model, m, train_data, grid_size, bins, channel)
                  for m in range(model.n_features)]
    names = model.feature_names or data.feature_names
    return InterpretationReport(list(names), s.id, step, channel, score, imp.values, ti, td,
                                curves, imp.n_skipped)
