"""Training and evaluation harness.

Splitting is condition-level: a fixed number of holdout conditions appear
only in the test set ("unseen"), a tail fraction of every training
condition's windows also goes to test ("seen"), and the remaining windows
are split 80/20 into train/validation at window level.  Training minimizes
L1 loss with AdamW, standardized inputs/targets, and early stopping on
validation loss.  Evaluation reports per-condition MAE (kN) and MAPE (%).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as tt
from .baseline import BaselineCNN, BaselineConfig
from .checkpoint import graph_from_meta, graph_to_meta, save_checkpoint
from .graph import HeteroGraph, build_bearing_graph, default_layout
from .model import HTGNN, ModelConfig, l1_loss
from .preprocess import WindowStore

MAPE_FLOOR_KN = 1.0  # |target| below this is excluded from MAPE (MAE only)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class SplitPlan:
    """Condition-level split: which conditions may train, which are holdout."""

    train_conditions: tuple
    test_conditions: tuple
    unseen_conditions: tuple
    seed: int

    def __post_init__(self):
        train, test = set(self.train_conditions), set(self.test_conditions)
        unseen = set(self.unseen_conditions)
        if not unseen <= test:
            raise ValueError("unseen conditions must be a subset of test")
        if unseen & train:
            raise ValueError("unseen conditions may not appear in training")
        if not (test - unseen) <= train:
            raise ValueError("seen test conditions must come from training")


def make_split(condition_ids, holdout_count: int, seed: int) -> SplitPlan:
    """Deterministically hold out ``holdout_count`` conditions for test."""
    ids = sorted(int(c) for c in condition_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate condition ids")
    if not 0 <= holdout_count < len(ids):
        raise ValueError(
            f"holdout {holdout_count} infeasible for {len(ids)} conditions"
        )
    rng = np.random.default_rng(seed)
    unseen = sorted(rng.choice(ids, size=holdout_count, replace=False).tolist())
    train = tuple(c for c in ids if c not in set(unseen))
    return SplitPlan(train, tuple(ids), tuple(unseen), seed)


@dataclass
class WindowAssignment:
    plan: SplitPlan
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    val_fraction: float
    seen_test_fraction: float


def assign_windows(store: WindowStore, plan: SplitPlan,
                   val_fraction: float = 0.2,
                   seen_test_fraction: float = 0.3,
                   seed: int | None = None) -> WindowAssignment:
    """Map windows to train/validation/test per the split plan.

    For each training condition the last ``seen_test_fraction`` of its
    windows (chronological tail) moves to the test set; the rest are split
    randomly into train and validation by window.  Every window of an
    unseen condition lands in test.
    """
    seed = plan.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    unseen = set(plan.unseen_conditions)
    train_conditions = set(plan.train_conditions)
    pool, test = [], []
    for cid in sorted(set(store.case_ids.tolist())):
        idx = np.flatnonzero(store.case_ids == cid)
        if cid in unseen:
            test.append(idx)
        elif cid in train_conditions:
            n_test = int(round(seen_test_fraction * idx.size))
            if n_test:
                test.append(idx[idx.size - n_test:])
            pool.append(idx[:idx.size - n_test])
        else:
            raise ValueError(f"condition {cid} missing from the split plan")
    pool = np.concatenate(pool) if pool else np.array([], dtype=np.int64)
    order = rng.permutation(pool.size)
    n_val = int(round(val_fraction * pool.size))
    val_idx = np.sort(pool[order[:n_val]])
    train_idx = np.sort(pool[order[n_val:]])
    test_idx = np.sort(np.concatenate(test)) if test else np.array([], dtype=np.int64)

    for name, idx in (("train", train_idx), ("validation", val_idx)):
        leaked = set(store.case_ids[idx].tolist()) & unseen
        if leaked:
            raise AssertionError(f"unseen conditions leaked into {name}: {leaked}")
    return WindowAssignment(plan, train_idx, val_idx, test_idx,
                            val_fraction, seen_test_fraction)


# -- standardization ----------------------------------------------------------


@dataclass
class Normalization:
    """Scalar per-signal-type statistics plus per-component target stats.

    Feature statistics are scalars over all channels of a type so that
    permuting nodes never changes the standardized inputs.
    """

    t_mean: float
    t_std: float
    v_mean: float
    v_std: float
    w_mean: float
    w_std: float
    y_mean: list
    y_std: list

    @classmethod
    def fit(cls, store: WindowStore, train_idx: np.ndarray) -> "Normalization":
        if train_idx.size == 0:
            raise ValueError("cannot fit normalization on an empty train set")

        def stats(a):
            return float(a.mean()), float(max(a.std(), 1e-12))

        tm, ts = stats(store.x_t[train_idx])
        vm, vs = stats(store.x_v[train_idx])
        wm, ws = stats(store.w[train_idx])
        y = store.y[train_idx]
        ym = y.mean(axis=0)
        ys = np.maximum(y.std(axis=0), 1e-12)
        return cls(tm, ts, vm, vs, wm, ws, ym.tolist(), ys.tolist())

    def apply(self, x_t, x_v, w):
        return ((x_t - self.t_mean) / self.t_std,
                (x_v - self.v_mean) / self.v_std,
                (w - self.w_mean) / self.w_std)

    def standardize_y(self, y):
        return (y - np.asarray(self.y_mean)) / np.asarray(self.y_std)

    def destandardize_y(self, y):
        return y * np.asarray(self.y_std) + np.asarray(self.y_mean)


# -- training ------------------------------------------------------------------


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 512
    max_epochs: int = 50
    patience: int = 10
    min_epochs: int = 30  # early stopping activates after this many epochs
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8


@dataclass
class TrainState:
    epoch: int = 0
    best_val: float = float("inf")
    best_epoch: int = -1
    since_improvement: int = 0

    def update(self, val_loss: float) -> bool:
        """Record an epoch's validation loss; True if it improved."""
        if val_loss < self.best_val:
            self.best_val = val_loss
            self.best_epoch = self.epoch
            self.since_improvement = 0
            return True
        self.since_improvement += 1
        return False

    def should_stop(self, cfg: TrainConfig) -> bool:
        return (self.epoch + 1 >= cfg.min_epochs
                and self.since_improvement >= cfg.patience)


def _forward(model, norm: Normalization, store: WindowStore, idx: np.ndarray,
             training: bool, rng=None):
    x_t, x_v, w = norm.apply(store.x_t[idx], store.x_v[idx], store.w[idx])
    if isinstance(model, HTGNN):
        return model.forward(x_t, x_v, w)
    stacked = np.concatenate([x_t, x_v, w[:, None, :]], axis=1)
    return model.forward(stacked, training=training, rng=rng)


def _epoch_loss(model, norm, store, idx, batch_size) -> float:
    """Mean standardized L1 over an index set, evaluation mode."""
    if idx.size == 0:
        raise ValueError("empty evaluation index set")
    total = 0.0
    with tt.no_grad():
        for lo in range(0, idx.size, batch_size):
            part = idx[lo:lo + batch_size]
            pred = _forward(model, norm, store, part, training=False)
            y = norm.standardize_y(store.y[part])
            total += l1_loss(pred, y).data.item() * part.size
    return total / idx.size


def train(store: WindowStore, assignment: WindowAssignment, kind: str,
          seed: int, graph: HeteroGraph | None = None, model_cfg=None,
          train_cfg: TrainConfig | None = None):
    """Train a model; returns (params, meta, log_rows).

    ``params`` are the best-validation parameter arrays by name; ``meta``
    is everything needed to rebuild and evaluate the model; ``log_rows``
    are (epoch, train_loss, val_loss) tuples in standardized units.
    """
    cfg = train_cfg if train_cfg is not None else TrainConfig()
    graph = graph if graph is not None else build_bearing_graph(default_layout())
    if list(graph.node_order["T"]) != list(store.meta["temp_ids"]) or \
            list(graph.node_order["V"]) != list(store.meta["vib_ids"]):
        raise ValueError("window store channel order does not match the graph")

    window = int(store.meta["window"])
    if kind == "htgnn":
        mcfg = model_cfg if model_cfg is not None else ModelConfig(window=window)
        model = HTGNN(mcfg, graph, seed=seed)
    elif kind == "cnn":
        mcfg = model_cfg if model_cfg is not None else BaselineConfig()
        in_channels = graph.n_nodes("T") + graph.n_nodes("V") + 1
        model = BaselineCNN(mcfg, in_channels, window, seed=seed)
    else:
        raise ValueError(f"unknown model kind {kind!r}")

    norm = Normalization.fit(store, assignment.train_idx)
    params = model.parameters()
    opt = tt.AdamW(params, lr=cfg.lr, betas=cfg.betas, eps=cfg.eps,
                   weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(seed)
    state = TrainState()
    best = {p.name: p.data.copy() for p in params}
    log_rows = []

    train_idx = assignment.train_idx
    if train_idx.size == 0 or assignment.val_idx.size == 0:
        raise ValueError("training requires nonempty train and validation sets")
    for epoch in range(cfg.max_epochs):
        state.epoch = epoch
        order = rng.permutation(train_idx.size)
        run_loss, seen_n = 0.0, 0
        for lo in range(0, train_idx.size, cfg.batch_size):
            part = train_idx[order[lo:lo + cfg.batch_size]]
            pred = _forward(model, norm, store, part, training=True, rng=rng)
            y = norm.standardize_y(store.y[part])
            loss = l1_loss(pred, y)
            value = loss.data.item()
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss {value} at epoch {epoch}"
                )
            for p in params:
                p.grad = None
            loss.backward()
            opt.step()
            run_loss += value * part.size
            seen_n += part.size
        val_loss = _epoch_loss(model, norm, store, assignment.val_idx,
                               cfg.batch_size)
        log_rows.append((epoch, run_loss / seen_n, val_loss))
        if state.update(val_loss):
            best = {p.name: p.data.copy() for p in params}
        if state.should_stop(cfg):
            break

    meta = {
        "kind": kind,
        "model_config": asdict(mcfg),
        "train_config": asdict(cfg),
        "seed": seed,
        "window": window,
        "graph": graph_to_meta(graph),
        "normalization": asdict(norm),
        "split": {
            "train_conditions": list(assignment.plan.train_conditions),
            "test_conditions": list(assignment.plan.test_conditions),
            "unseen_conditions": list(assignment.plan.unseen_conditions),
            "seed": assignment.plan.seed,
            "val_fraction": assignment.val_fraction,
            "seen_test_fraction": assignment.seen_test_fraction,
        },
        "best_epoch": state.best_epoch,
        "best_val_loss": state.best_val,
    }
    return best, meta, log_rows


def _f(v) -> str:
    return repr(float(v))


def save_training_log(path, log_rows):
    with open(path, "w") as f:
        f.write("epoch,train_loss,val_loss\n")
        for epoch, tr, va in log_rows:
            f.write(f"{epoch},{_f(tr)},{_f(va)}\n")


def model_from_checkpoint(params: dict[str, np.ndarray], meta: dict):
    """Rebuild a model and load its parameters from checkpoint contents."""
    graph = graph_from_meta(meta["graph"])
    kind = meta["kind"]
    if kind == "htgnn":
        mcfg = ModelConfig(**meta["model_config"])
        model = HTGNN(mcfg, graph, seed=0)
    elif kind == "cnn":
        bcfg = BaselineConfig(**{k: tuple(v) if isinstance(v, list) else v
                                 for k, v in meta["model_config"].items()})
        in_channels = graph.n_nodes("T") + graph.n_nodes("V") + 1
        model = BaselineCNN(bcfg, in_channels, int(meta["window"]), seed=0)
    else:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    model_params = {p.name: p for p in model.parameters()}
    missing = set(model_params) - set(params)
    extra = set(params) - set(model_params)
    if missing or extra:
        raise ValueError(
            f"checkpoint/model parameter mismatch: missing {sorted(missing)}, "
            f"extra {sorted(extra)}"
        )
    for name, p in model_params.items():
        if p.data.shape != params[name].shape:
            raise ValueError(f"shape mismatch for {name}")
        p.data = np.array(params[name], dtype=np.float64)
    norm = Normalization(**meta["normalization"])
    return model, norm, graph


def predict(model, norm: Normalization, x_t, x_v, w) -> np.ndarray:
    """De-standardized load predictions (kN) for a batch of windows."""
    xt, xv, ww = norm.apply(np.asarray(x_t, dtype=np.float64),
                            np.asarray(x_v, dtype=np.float64),
                            np.asarray(w, dtype=np.float64))
    with tt.no_grad():
        if isinstance(model, HTGNN):
            pred = model.forward(xt, xv, ww)
        else:
            stacked = np.concatenate([xt, xv, ww[:, None, :]], axis=1)
            pred = model.forward(stacked, training=False)
    return norm.destandardize_y(pred.data)


# -- evaluation ----------------------------------------------------------------


@dataclass
class CaseMetrics:
    case_id: int
    f_x: float
    f_y: float
    speed: float
    seen: bool
    mae_fx: float
    mae_fy: float
    mape_fx: float | None  # None when |F_x| is under the MAPE floor
    mape_fy: float | None


def evaluate(model, norm: Normalization, store: WindowStore,
             test_idx: np.ndarray, unseen_conditions,
             batch_size: int = 512):
    """Per-condition metrics over the test windows plus seen/unseen means."""
    if test_idx.size == 0:
        raise ValueError("empty test set")
    preds = np.concatenate([
        predict(model, norm, store.x_t[part], store.x_v[part], store.w[part])
        for part in np.array_split(test_idx, max(1, int(np.ceil(
            test_idx.size / batch_size))))
    ])
    targets = store.y[test_idx]
    cases = store.case_ids[test_idx]
    manifest = {int(r["case_id"]): r for r in store.meta["manifest"]}
    unseen = set(int(u) for u in unseen_conditions)

    rows = []
    for cid in sorted(set(cases.tolist())):
        mask = cases == cid
        err = np.abs(preds[mask] - targets[mask])
        mae = err.mean(axis=0)
        y_abs = np.abs(targets[mask])
        mape = []
        for k in range(2):
            if np.all(y_abs[:, k] >= MAPE_FLOOR_KN):
                mape.append(float(100.0 * np.mean(err[:, k] / y_abs[:, k])))
            else:
                mape.append(None)
        info = manifest[cid]
        rows.append(CaseMetrics(cid, info["F_x"], info["F_y"], info["speed"],
                                cid not in unseen, float(mae[0]), float(mae[1]),
                                mape[0], mape[1]))

    def agg(selected):
        out = {}
        for name in ("mae_fx", "mae_fy", "mape_fx", "mape_fy"):
            vals = [getattr(r, name) for r in selected
                    if getattr(r, name) is not None]
            out[name] = float(np.mean(vals)) if vals else None
        return out

    aggregates = {
        "seen": agg([r for r in rows if r.seen]),
        "unseen": agg([r for r in rows if not r.seen]),
    }
    return rows, aggregates


def write_metrics_csv(path, rows: list[CaseMetrics], aggregates: dict):
    def fmt(v):
        return "" if v is None else _f(v)

    with open(path, "w") as f:
        f.write("case_id,F_x,F_y,speed,seen,mae_fx,mae_fy,mape_fx,mape_fy\n")
        for r in rows:
            f.write(f"{r.case_id},{_f(r.f_x)},{_f(r.f_y)},{_f(r.speed)},"
                    f"{int(r.seen)},{_f(r.mae_fx)},{_f(r.mae_fy)},"
                    f"{fmt(r.mape_fx)},{fmt(r.mape_fy)}\n")
        for name in ("seen", "unseen"):
            a = aggregates[name]
            f.write(f"{name}_mean,,,,,{fmt(a['mae_fx'])},{fmt(a['mae_fy'])},"
                    f"{fmt(a['mape_fx'])},{fmt(a['mape_fy'])}\n")


def aggregate_runs(per_run_aggregates: list[dict]) -> dict:
    """Mean and standard deviation of aggregate metrics across repeated
    runs (the protocol repeats training with different seeds)."""
    out = {}
    for split in ("seen", "unseen"):
        out[split] = {}
        for name in ("mae_fx", "mae_fy", "mape_fx", "mape_fy"):
            vals = [r[split][name] for r in per_run_aggregates
                    if r[split][name] is not None]
            if vals:
                out[split][name] = {"mean": float(np.mean(vals)),
                                    "std": float(np.std(vals))}
            else:
                out[split][name] = None
    return out


def checkpoint_from_training(path, best_params: dict, meta: dict):
    """Persist a trained model using the shared checkpoint container."""
    from .tensor import Parameter

    params = [Parameter(name, arr) for name, arr in sorted(best_params.items())]
    save_checkpoint(path, params, meta)
