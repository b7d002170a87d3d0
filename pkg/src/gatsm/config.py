"""INI run configuration: model hyperparameters, training settings, data schema.

Sections and keys::

    [model]  feature_function, hidden_dims, n_basis, nbm_batch_norm, nbm_dropout,
             attn_embedding_size, attn_heads, attn_dropout, attn_slope, variant
    [train]  batch_size, learning_rate, weight_decay, patience, max_epochs, seed, loss
    [split]  ratios, seed
    [data]   id_column, time_column, features, target, task, per_step,
             categorical, n_classes

Bundled configs (``default``, ``energy``, ``heartbeat`` ...) can be named
instead of given as a path.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .datasets import SeriesSchema
from .model import ConfigError, ModelConfig
from .training import TrainConfig

MODEL_KEYS = {
    "feature_function": ("feature_variant", str),
    "hidden_dims": ("hidden", "ints"),
    "n_basis": ("n_basis", int),
    "nbm_batch_norm": ("nbm_batch_norm", "bool"),
    "nbm_dropout": ("nbm_dropout", float),
    "attn_embedding_size": ("attn_hidden", int),
    "attn_heads": ("attn_heads", int),
    "attn_dropout": ("attn_dropout", float),
    "attn_slope": ("attn_slope", float),
}
TRAIN_KEYS = {
    "batch_size": int, "learning_rate": float, "weight_decay": float,
    "patience": int, "max_epochs": int, "seed": int, "loss": str,
}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    variant: str = "full"
    split_ratios: tuple[float, ...] = (0.6, 0.2, 0.2)
    split_seed: int = 0
    schema: SeriesSchema | None = None


def bundled_configs() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("gatsm.configs").iterdir()
                  if p.name.endswith(".ini"))


def _convert(section: str, key: str, raw: str, kind, parser):
    try:
        if kind == "bool":
            return parser._convert_to_boolean(raw)
        if kind == "ints":
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid value") from None


def _list(raw: str) -> list[str]:
    return [v.strip() for v in raw.split(",") if v.strip()]


def load_config(source) -> RunConfig:
    """Parse an INI file path or a bundled config name."""
    parser = configparser.ConfigParser()
    path = Path(source)
    if path.exists():
        parser.read(path)
    elif str(source) in bundled_configs():
        parser.read_string(resources.files("gatsm.configs").joinpath(f"{source}.ini").read_text())
    else:
        raise FileNotFoundError(source)
    known_sections = {"model", "train", "split", "data"}
    extra = set(parser.sections()) - known_sections
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")

    run = RunConfig()
    model_kwargs = {}
    if parser.has_section("model"):
        for key, raw in parser.items("model"):
            if key == "variant":
                run.variant = raw.strip().lower()
                continue
            if key not in MODEL_KEYS:
                raise ConfigError(f"unknown [model] key {key!r}")
            name, kind = MODEL_KEYS[key]
            model_kwargs[name] = _convert("model", key, raw, kind, parser)
    run.model = ModelConfig(**model_kwargs)

    train_kwargs = {}
    if parser.has_section("train"):
        for key, raw in parser.items("train"):
            if key not in TRAIN_KEYS:
                raise ConfigError(f"unknown [train] key {key!r}")
            train_kwargs[key] = _convert("train", key, raw, TRAIN_KEYS[key], parser)
    run.train = TrainConfig(**train_kwargs)

    if parser.has_section("split"):
        sec = parser["split"]
        if "ratios" in sec:
            run.split_ratios = tuple(_convert("split", "ratios", r, float, parser)
                                     for r in _list(sec["ratios"]))
        run.split_seed = _convert("split", "seed", sec.get("seed", "0"), int, parser)

    if parser.has_section("data"):
        sec = parser["data"]
        try:
            run.schema = SeriesSchema(
                id_column=sec["id_column"], time_column=sec["time_column"],
                feature_columns=_list(sec["features"]), target_column=sec["target"],
                task=sec.get("task", "regression"),
                per_step=sec.getboolean("per_step", fallback=True),
                categorical=_list(sec.get("categorical", "")),
                n_classes=sec.getint("n_classes", fallback=None))
        except KeyError as exc:
            raise ConfigError(f"[data] is missing key {exc}") from None
    return run
