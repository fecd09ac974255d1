"""Command-line interface.

Subcommands:
  simulate    generate the synthetic condition grid to CSVs
  preprocess  turn a dataset directory into a window store (.npz)
  train       train the graph model or the CNN baseline
  evaluate    produce the per-condition metrics CSV from a checkpoint
  predict     load estimate for one preprocessed window CSV

A YAML config file (--config) can override any defaults; see README for
the schema.  All commands are deterministic given --seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np
import yaml

from .baseline import BaselineConfig
from .checkpoint import load_checkpoint
from .harness import (SplitPlan, TrainConfig, assign_windows,
                      checkpoint_from_training, evaluate, make_split,
                      model_from_checkpoint, predict, save_training_log,
                      train, write_metrics_csv)
from .model import ModelConfig
from .preprocess import WindowStore, build_window_store
from .simulate import GridSpec, generate_condition_grid, simulate_dataset


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        cfg = yaml.safe_load(f) or {}
    if not isinstance(cfg, dict):
        raise SystemExit(f"config file {path} must contain a mapping")
    return cfg


def _dataclass_from(cls, overrides: dict):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise SystemExit(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    coerced = {k: tuple(v) if isinstance(v, list) else v
               for k, v in overrides.items()}
    return cls(**coerced)


def _split_settings(cfg: dict) -> dict:
    section = cfg.get("split", {})
    return {
        "holdout_count": int(section.get("holdout_count", 12)),
        "val_fraction": float(section.get("val_fraction", 0.2)),
        "seen_test_fraction": float(section.get("seen_test_fraction", 0.3)),
        "assignment_seed": int(section.get("assignment_seed", 0)),
    }


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    sim = cfg.get("simulate", {})
    spec = _dataclass_from(GridSpec, sim.get("grid", {}))
    duration = int(sim.get("duration", 600))
    split = _split_settings(cfg)
    n_conditions = len(generate_condition_grid(spec))
    plan = make_split(range(n_conditions), split["holdout_count"], args.seed)
    simulate_dataset(args.out, seed=args.seed, duration=duration, spec=spec,
                     unseen_ids=list(plan.unseen_conditions),
                     constants=sim.get("constants"))
    print(f"wrote {n_conditions} cases to {args.out} "
          f"({len(plan.unseen_conditions)} unseen)")
    return 0


def cmd_preprocess(args) -> int:
    cfg = _load_config(args.config).get("preprocess", {})
    store = build_window_store(
        args.data,
        window=int(cfg.get("window", 30)),
        stride=int(cfg.get("stride", 1)),
        ma_window=int(cfg.get("ma_window", 60)),
        rate_span=int(cfg.get("rate_span", 300)),
        rms_group=int(cfg.get("rms_group", 1)),
    )
    store.save(args.out)
    print(f"wrote {len(store)} windows to {args.out}")
    return 0


def _plan_from_store(store: WindowStore, seed: int) -> SplitPlan:
    manifest = store.meta["manifest"]
    ids = [int(r["case_id"]) for r in manifest]
    unseen = tuple(sorted(int(r["case_id"]) for r in manifest
                          if r["split"] == "unseen"))
    train_ids = tuple(c for c in sorted(ids) if c not in set(unseen))
    return SplitPlan(train_ids, tuple(sorted(ids)), unseen, seed)


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    store = WindowStore.load(args.store)
    split = _split_settings(cfg)
    plan = _plan_from_store(store, split["assignment_seed"])
    assignment = assign_windows(store, plan,
                                val_fraction=split["val_fraction"],
                                seen_test_fraction=split["seen_test_fraction"])
    if args.model == "htgnn":
        section = cfg.get("model", {})
        section.setdefault("window", int(store.meta["window"]))
        mcfg = _dataclass_from(ModelConfig, section)
    else:
        mcfg = _dataclass_from(BaselineConfig, cfg.get("baseline", {}))
    tcfg = _dataclass_from(TrainConfig, cfg.get("train", {}))
    best, meta, log_rows = train(store, assignment, args.model,
                                 seed=args.seed, model_cfg=mcfg,
                                 train_cfg=tcfg)
    checkpoint_from_training(args.out, best, meta)
    if args.log:
        save_training_log(args.log, log_rows)
    print(f"best val loss {meta['best_val_loss']!r} "
          f"at epoch {meta['best_epoch']} -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    params, meta = load_checkpoint(args.model_path)
    store = WindowStore.load(args.store)
    model, norm, _ = model_from_checkpoint(params, meta)
    split = meta["split"]
    plan = SplitPlan(tuple(split["train_conditions"]),
                     tuple(split["test_conditions"]),
                     tuple(split["unseen_conditions"]), int(split["seed"]))
    assignment = assign_windows(
        store, plan, val_fraction=float(split["val_fraction"]),
        seen_test_fraction=float(split["seen_test_fraction"]))
    rows, aggregates = evaluate(model, norm, store, assignment.test_idx,
                                plan.unseen_conditions)
    write_metrics_csv(args.out, rows, aggregates)
    if args.predictions_out:
        _write_predictions_csv(args.predictions_out, model, norm, store,
                               assignment.test_idx)
    seen = aggregates["seen"]
    print(f"seen MAPE_Fx {seen['mape_fx']} MAPE_Fy {seen['mape_fy']} "
          f"-> {args.out}")
    return 0


def _write_predictions_csv(path, model, norm, store, test_idx):
    """Plot-ready per-window predictions for the test set."""
    from .harness import predict as _predict

    with open(path, "w") as f:
        f.write("case_id,window,target_fx,target_fy,pred_fx,pred_fy\n")
        for lo in range(0, test_idx.size, 512):
            part = test_idx[lo:lo + 512]
            pred = _predict(model, norm, store.x_t[part], store.x_v[part],
                            store.w[part])
            for i, idx in enumerate(part):
                y = store.y[idx]
                f.write(f"{int(store.case_ids[idx])},{int(idx)},"
                        f"{float(y[0])!r},{float(y[1])!r},"
                        f"{float(pred[i, 0])!r},{float(pred[i, 1])!r}\n")


def cmd_predict(args) -> int:
    params, meta = load_checkpoint(args.model_path)
    model, norm, graph = model_from_checkpoint(params, meta)
    temp_ids = list(graph.node_order["T"])
    vib_ids = list(graph.node_order["V"])
    with open(args.window) as f:
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    data = np.array(rows, dtype=np.float64)
    cols = {name: data[:, i] for i, name in enumerate(header)}
    missing = [c for c in temp_ids + vib_ids + ["speed"] if c not in cols]
    if missing:
        raise SystemExit(f"window CSV missing channels: {missing}")
    length = int(meta["window"])
    if data.shape[0] != length:
        raise SystemExit(
            f"window CSV has {data.shape[0]} rows, model expects {length}"
        )
    x_t = np.stack([cols[c] for c in temp_ids])[None]
    x_v = np.stack([cols[c] for c in vib_ids])[None]
    w = cols["speed"][None]
    pred = predict(model, norm, x_t, x_v, w)[0]
    print(f"F_x {float(pred[0])!r}")
    print(f"F_y {float(pred[1])!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htgnn",
        description="Bearing-load virtual sensor: simulate, preprocess, "
                    "train, evaluate, predict.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None, help="YAML config file")

    p = sub.add_parser("simulate", help="generate the synthetic dataset")
    common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("preprocess", help="build the window store")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output .npz path")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--store", required=True, help="window store .npz")
    p.add_argument("--model", choices=("htgnn", "cnn"), default="htgnn")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", default=None, help="training log CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--model-path", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--predictions-out", default=None,
                   help="optional per-window predictions CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="predict loads for one window CSV")
    common(p)
    p.add_argument("--model-path", required=True)
    p.add_argument("--window", required=True, help="preprocessed window CSV")
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
