"""Series containers, long-format text ingestion, splitting and synthetic generators."""
from __future__ import annotations

import contextlib
import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

RNG_ALGORITHM = "numpy.random.PCG64"


class ParseError(ValueError):
    """A data row could not be parsed."""


class SchemaError(ValueError):
    """The file does not match the declared schema."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str = "numeric"      # numeric | categorical


@dataclass
class Sample:
    """One series: raw features ``(T, M)`` with missing-cell flags and a target.

    ``y`` is a scalar for per-series targets or a length-``T`` array for
    per-step targets. Categorical columns hold their raw string values until a
    preprocessor encodes them.
    """

    x: np.ndarray
    y: object
    missing: np.ndarray | None = None
    id: str = ""

    def __post_init__(self):
        if self.missing is None:
            if self.x.dtype == object:
                self.missing = np.array([[v is None for v in row] for row in self.x],
                                        dtype=bool).reshape(self.x.shape)
            else:
                self.missing = np.isnan(self.x)

    @property
    def length(self) -> int:
        return self.x.shape[0]


@dataclass
class Dataset:
    samples: list[Sample]
    features: list[FeatureSpec]
    task: str = "regression"
    n_classes: int | None = None
    per_step: bool = False
    target_name: str = "target"
    preprocessed: bool = False

    def __post_init__(self):
        M = len(self.features)
        for s in self.samples:
            if s.x.ndim != 2 or s.x.shape[1] != M:
                raise SchemaError(f"sample {s.id!r} has shape {s.x.shape}, expected (T, {M})")
            if self.per_step and np.shape(s.y) != (s.length,):
                raise SchemaError(f"sample {s.id!r}: per-step target length differs from T")

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def lengths(self) -> np.ndarray:
        return np.array([s.length for s in self.samples], dtype=np.int64)

    def subset(self, indices) -> "Dataset":
        return Dataset([self.samples[i] for i in indices], list(self.features), self.task,
                       self.n_classes, self.per_step, self.target_name, self.preprocessed)

    def arrays(self, indices=None):
        """Pad into ``X (N, T, M)``, ``lengths (N,)`` and targets.

        Targets come back as ``(N,)`` for per-series data or ``(N, T)`` for
        per-step data, padded with 0. Requires numeric features.
        """
        samples = self.samples if indices is None else [self.samples[i] for i in indices]
        lengths = np.array([s.length for s in samples], dtype=np.int64)
        T, M = int(lengths.max()), self.n_features
        X = np.zeros((len(samples), T, M))
        for i, s in enumerate(samples):
            X[i, :s.length] = np.asarray(s.x, dtype=np.float64)
        if self.per_step:
            y = np.zeros((len(samples), T))
            for i, s in enumerate(samples):
                y[i, :s.length] = s.y
        else:
            y = np.array([s.y for s in samples], dtype=np.float64)
        return X, lengths, y


@dataclass
class SeriesSchema:
    """Column layout of a long-format file: one row per (series, step)."""

    id_column: str
    time_column: str
    feature_columns: list[str]
    target_column: str
    task: str = "regression"
    per_step: bool = True
    categorical: list[str] = field(default_factory=list)
    n_classes: int | None = None
    delimiter: str = ","


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"line {line}: column {column!r} is not numeric: {text!r}") from None


def load_series(path, schema: SeriesSchema) -> Dataset:
    """Read a delimited long-format file into a :class:`Dataset`.

    Empty feature cells are flagged missing. Rows are grouped by series id in
    order of first appearance and sorted by the time column.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    cat = set(schema.categorical)
    rows_by_id: dict[str, list] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        needed = [schema.id_column, schema.time_column, *schema.feature_columns,
                  schema.target_column]
        absent = [c for c in needed if c not in header]
        if absent:
            raise SchemaError(f"{path}: missing columns {absent}")
        col = {name: header.index(name) for name in needed}
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"line {line}: expected {len(header)} fields, got {len(row)}")
            sid = row[col[schema.id_column]]
            step = _parse_float(row[col[schema.time_column]], line, schema.time_column)
            values = []
            for name in schema.feature_columns:
                text = row[col[name]].strip()
                if text == "":
                    values.append(None)
                elif name in cat:
                    values.append(text)
                else:
                    values.append(_parse_float(text, line, name))
            target_text = row[col[schema.target_column]].strip()
            target = None if target_text == "" else _parse_float(
                target_text, line, schema.target_column)
            rows_by_id.setdefault(sid, []).append((step, values, target, line))

    features = [FeatureSpec(n, "categorical" if n in cat else "numeric")
                for n in schema.feature_columns]
    samples = []
    for sid, rows in rows_by_id.items():
        rows.sort(key=lambda r: r[0])
        if cat:
            x = np.array([r[1] for r in rows], dtype=object)
            missing = np.array([[v is None for v in r[1]] for r in rows], dtype=bool)
            for j, f in enumerate(features):
                if f.kind == "numeric":
                    x[:, j] = [np.nan if v is None else v for v in x[:, j]]
        else:
            x = np.array([[np.nan if v is None else v for v in r[1]] for r in rows],
                         dtype=np.float64)
            missing = np.isnan(x)
        targets = [r[2] for r in rows]
        if schema.per_step:
            if any(t is None for t in targets):
                bad = next(r[3] for r in rows if r[2] is None)
                raise ParseError(f"line {bad}: per-step target is empty")
            y = np.array(targets, dtype=np.float64)
        else:
            present = {t for t in targets if t is not None}
            if len(present) != 1:
                raise SchemaError(f"series {sid!r}: per-series target must be a single value, "
                                  f"found {sorted(present)}")
            y = present.pop()
        if schema.task != "regression":
            y = np.asarray(y)
            if not np.all(y == np.round(y)):
                raise ParseError(f"series {sid!r}: class labels must be integers")
            y = y.astype(np.int64) if schema.per_step else int(y)
        samples.append(Sample(x=x, y=y, missing=missing, id=sid))
    if not samples:
        raise ParseError(f"{path}: no data rows")

    n_classes = schema.n_classes
    if schema.task != "regression" and n_classes is None:
        labels = np.concatenate([np.atleast_1d(s.y) for s in samples])
        n_classes = max(int(labels.max()) + 1, 2)
    if schema.task == "binary":
        n_classes = 2
    return Dataset(samples, features, schema.task, n_classes, schema.per_step,
                   schema.target_column)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    v = float(v)
    return "" if math.isnan(v) else repr(v)


@contextlib.contextmanager
def _open_text(target):
    if hasattr(target, "write"):
        yield target
    else:
        with Path(target).open("w", newline="") as fh:
            yield fh


def write_series(dataset: Dataset, path, id_column: str = "series_id",
                 time_column: str = "step") -> SeriesSchema:
    """Write ``dataset`` in long format to a path or text stream.

    Returns the schema that reads the file back.
    """
    names = dataset.feature_names
    with _open_text(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([id_column, time_column, *names, dataset.target_name])
        for i, s in enumerate(dataset.samples):
            sid = s.id or str(i)
            for t in range(s.length):
                cells = [None if s.missing[t, j] else s.x[t, j] for j in range(len(names))]
                y = s.y[t] if dataset.per_step else s.y
                if dataset.task != "regression":
                    y = str(int(y))
                w.writerow([sid, t, *[_fmt(c) for c in cells], _fmt(y)])
    return SeriesSchema(id_column, time_column, names, dataset.target_name, dataset.task,
                        dataset.per_step,
                        [f.name for f in dataset.features if f.kind == "categorical"],
                        dataset.n_classes)


def write_manifest(path, generator: str, params: dict, seed: int):
    record = {"generator": generator, "seed": seed, "rng": RNG_ALGORITHM, "params": params}
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def split_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    ratios = np.asarray(ratios, dtype=np.float64)
    if np.any(ratios <= 0) or not math.isclose(ratios.sum(), 1.0, abs_tol=1e-9):
        raise ValueError(f"ratios must be positive and sum to 1, got {list(ratios)}")
    if n < len(ratios):
        raise ValueError(f"cannot split {n} series into {len(ratios)} partitions")
    exact = n * ratios
    sizes = np.floor(exact).astype(int)
    order = np.argsort(-(exact - sizes), kind="stable")
    sizes[order[:n - sizes.sum()]] += 1
    for i in np.flatnonzero(sizes == 0):
        sizes[np.argmax(sizes)] -= 1
        sizes[i] = 1
    return sizes.tolist()


def split(dataset: Dataset, ratios=(0.6, 0.2, 0.2), seed: int = 0):
    """Series-level shuffled partition; returns one :class:`Dataset` per ratio."""
    sizes = split_sizes(len(dataset), ratios)
    perm = np.random.default_rng(seed).permutation(len(dataset))
    bounds = np.cumsum(sizes)[:-1]
    return tuple(dataset.subset(np.sort(part)) for part in np.split(perm, bounds))


def gen_tumor(n: int, horizon: int = 30, seed: int = 0, chemo_coef: float = 10.0,
              radio_coef: float = 1.0, growth: float = 0.05, pulse_prob: float = 0.15,
              noise: float = 0.01, dose_range=(0.05, 0.15), size_range=(2.0, 6.0)) -> Dataset:
    """Linear dose-response tumour simulator with per-step next-size targets.

    ``size[t+1] = max(0, size[t] * (1 + growth) - chemo_coef * chemo[t]
    - radio_coef * radio[t] + noise * eps)``. Doses are sparse pulses drawn
    with probability ``pulse_prob`` per step and magnitude in ``dose_range``.
    Features per step: (size, chemo dose, radio dose).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        size = np.empty(horizon + 1)
        size[0] = rng.uniform(*size_range)
        doses = rng.uniform(*dose_range, size=(horizon, 2))
        doses *= rng.random((horizon, 2)) < pulse_prob
        eps = rng.normal(size=horizon)
        for t in range(horizon):
            nxt = (size[t] * (1.0 + growth) - chemo_coef * doses[t, 0]
                   - radio_coef * doses[t, 1] + noise * eps[t])
            size[t + 1] = max(nxt, 0.0)
        x = np.column_stack([size[:-1], doses])
        samples.append(Sample(x=x, y=size[1:].copy(), id=f"tumor{i}"))
    features = [FeatureSpec("tumor_size"), FeatureSpec("chemo_dose"), FeatureSpec("radio_dose")]
    return Dataset(samples, features, "regression", None, per_step=True,
                   target_name="next_tumor_size")


def gen_seasonal(n: int, period: int = 5, horizon: int = 20, seed: int = 0,
                 noise: float = 0.05, n_features: int = 2, lag: int | None = None) -> Dataset:
    """Series whose target is the first feature ``lag`` steps before the end.

    Inputs are i.i.d. standard normal, so the last step alone carries no
    information about the target unless ``lag`` is 0. ``lag`` defaults to
    ``period``.
    """
    if period < 1:
        raise ValueError("period must be >= 1")
    lag = period if lag is None else lag
    if not 0 <= lag < horizon:
        raise ValueError(f"lag must lie in [0, {horizon})")
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        x = rng.normal(size=(horizon, n_features))
        y = float(x[horizon - 1 - lag, 0] + noise * rng.normal())
        samples.append(Sample(x=x, y=y, id=f"seasonal{i}"))
    features = [FeatureSpec(f"x{j}") for j in range(n_features)]
    return Dataset(samples, features, "regression", None, per_step=False,
                   target_name="lagged_value")


def save_schema(schema: SeriesSchema, path):
    Path(path).write_text(json.dumps(asdict(schema), indent=2, sort_keys=True) + "\n")


def load_schema(path) -> SeriesSchema:
    return SeriesSchema(**json.loads(Path(path).read_text()))


def schema_path(data_path) -> Path:
    """Sidecar location for the schema describing ``data_path``."""
    return Path(str(data_path) + ".schema.json")
