"""Command-line front end: train, eval, interpret, gen-data, export.

Set ``GATSM_NUM_THREADS`` to cap the BLAS thread pool.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import persistence
from .config import load_config
from .datasets import (SeriesSchema, gen_seasonal, gen_tumor, load_schema, load_series,
                       save_schema, schema_path, split, write_manifest, write_series)
from .interpret import build_report
from .model import build_variant
from .preprocessing import Preprocessor
from .training import evaluate, train


THREADS_ENV = "GATSM_NUM_THREADS"


class CliError(Exception):
    pass


def _schema_for(data_path, header: dict | None = None, run=None) -> SeriesSchema:
    if run is not None and run.schema is not None:
        return run.schema
    if header is not None and header.get("extra", {}).get("schema"):
        return SeriesSchema(**header["extra"]["schema"])
    sidecar = schema_path(data_path)
    if not sidecar.exists():
        raise CliError(f"no schema for {data_path}: add a [data] section or {sidecar}")
    return load_schema(sidecar)


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return path


def _splits(dataset, header: dict):
    extra = header.get("extra", {})
    ratios = tuple(extra.get("split_ratios", (0.6, 0.2, 0.2)))
    return split(dataset, ratios, extra.get("split_seed", 0))


def cmd_train(args) -> int:
    run = load_config(args.config)
    if args.seed is not None:
        run.train.seed = args.seed
        run.split_seed = args.seed
    data_path = _require(args.data)
    schema = _schema_for(data_path, run=run)
    dataset = load_series(data_path, schema)
    tr, va, _ = split(dataset, run.split_ratios, run.split_seed)
    pp = Preprocessor.fit(tr)
    model = build_variant(dataset.n_features, run.variant, dataset.task, dataset.n_classes,
                          run.model, seed=run.train.seed)
    model.preprocessor = pp
    model.feature_names = dataset.feature_names
    log_path = args.log or str(args.out) + ".log.jsonl"
    result = train(model, pp.transform(tr), pp.transform(va), run.train, log_path=log_path)
    extra = {"split_ratios": list(run.split_ratios), "split_seed": run.split_seed,
             "schema": asdict(schema), "variant": run.variant}
    persistence.save(model, args.out, run.train.to_dict(), extra)
    print(json.dumps({"model": str(args.out), "log": log_path, "best_epoch": result.best_epoch,
                      "best_val_loss": result.best_val_loss, "epochs": result.epochs_run}))
    return 0


def cmd_eval(args) -> int:
    model, header = persistence.load_with_header(_require(args.model))
    data_path = _require(args.data)
    dataset = load_series(data_path, _schema_for(data_path, header))
    if args.split != "all":
        dataset = dict(zip(("train", "val", "test"), _splits(dataset, header)))[args.split]
    metrics = evaluate(model, model.preprocessor.transform(dataset))
    print(json.dumps({"split": args.split, "n_series": len(dataset), **metrics.to_dict()}))
    return 0


def cmd_interpret(args) -> int:
    model, header = persistence.load_with_header(_require(args.model))
    data_path = _require(args.data)
    dataset = load_series(data_path, _schema_for(data_path, header))
    train_split = _splits(dataset, header)[0]
    if not 0 <= args.sample < len(dataset):
        raise CliError(f"sample {args.sample} outside 0..{len(dataset) - 1}")
    report = build_report(model, dataset, args.sample, args.step, train_split,
                          channel=args.channel, grid_size=args.grid_size, bins=args.bins)
    out = Path(args.out or f"report_{args.sample}_{report.step}.json")
    report.save_json(out)
    if args.csv:
        report.save_csv(args.csv)
    print(json.dumps({"sample": args.sample, "sample_id": report.sample_id,
                      "step": report.step, "score": report.score,
                      "contribution_sum": float(report.time_dependent.sum()),
                      "report": str(out)}))
    return 0


def cmd_gen_data(args) -> int:
    if args.generator == "tumor":
        params = {"n": args.n, "horizon": args.horizon or 30, "noise": 0.01 if args.noise is None else args.noise,
                  "chemo_coef": args.chemo_coef, "radio_coef": args.radio_coef}
        dataset = gen_tumor(seed=args.seed, **params)
    else:
        params = {"n": args.n, "horizon": args.horizon or 20, "noise": 0.05 if args.noise is None else args.noise,
                  "period": args.period}
        dataset = gen_seasonal(seed=args.seed, **params)
    if args.out is None:
        write_series(dataset, sys.stdout)
        return 0
    schema = write_series(dataset, args.out)
    save_schema(schema, schema_path(args.out))
    write_manifest(str(args.out) + ".manifest.json", args.generator, params, args.seed)
    return 0


def cmd_export(args) -> int:
    buf = _require(args.model).read_bytes()
    header, _ = persistence.read_header(buf)
    model, _ = persistence.from_bytes(buf)
    dump = {"header": {k: v for k, v in header.items() if k != "tensors"},
            "parameters": {k: v.tolist() for k, v in model.state_dict().items()}}
    text = json.dumps(dump, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gatsm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a model and write an archive plus a JSONL log")
    t.add_argument("--config", required=True, help="INI path or bundled config name")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--log")
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="print metrics as JSON")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("interpret", help="write an interpretation report")
    i.add_argument("--model", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--sample", type=int, required=True, help="0-based series position")
    i.add_argument("--step", type=int, help="1-based query step (default: last)")
    i.add_argument("--channel", type=int, default=0)
    i.add_argument("--grid-size", type=int, default=256)
    i.add_argument("--bins", type=int, default=64)
    i.add_argument("--out")
    i.add_argument("--csv")
    i.set_defaults(func=cmd_interpret)

    g = sub.add_parser("gen-data", help="write a synthetic dataset")
    g.add_argument("generator", choices=("tumor", "seasonal"))
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--horizon", type=int)
    g.add_argument("--noise", type=float)
    g.add_argument("--period", type=int, default=5)
    g.add_argument("--chemo-coef", type=float, default=10.0)
    g.add_argument("--radio-coef", type=float, default=1.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_data)

    x = sub.add_parser("export", help="dump archive parameters as JSON")
    x.add_argument("--model", required=True)
    x.add_argument("--out")
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = os.environ.get(THREADS_ENV)
    try:
        if threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=int(threads)):
                return args.func(args)
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"gatsm: file not found: {exc.filename or exc}", file=sys.stderr)
    except (CliError, ValueError, KeyError, IndexError) as exc:
        print(f"gatsm: error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
