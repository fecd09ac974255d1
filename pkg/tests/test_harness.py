"""Split logic, training loop mechanics, and evaluation metrics."""

import numpy as np
import pytest

from htgnn.harness import (CaseMetrics, MAPE_FLOOR_KN, Normalization,
                           SplitPlan, TrainConfig, TrainState,
                           TrainingDiverged, WindowAssignment, aggregate_runs,
                           assign_windows, checkpoint_from_training, evaluate,
                           make_split, model_from_checkpoint, predict, train,
                           write_metrics_csv)
from htgnn.model import ModelConfig
from htgnn.baseline import BaselineConfig
from htgnn.preprocess import WindowStore


def toy_store(n_cases=6, per_case=10, seed=0, temp_ids=None, vib_ids=None,
              window=8):
    rng = np.random.default_rng(seed)
    n = n_cases * per_case
    case_ids = np.repeat(np.arange(n_cases), per_case)
    y = np.stack([50.0 + 10.0 * case_ids, 20.0 + 5.0 * case_ids], axis=1)
    meta = {
        "window": window, "stride": 1,
        "temp_ids": temp_ids or ["t0", "t1"],
        "vib_ids": vib_ids or ["v0"],
        "manifest": [{"case_id": int(c), "F_x": 50.0 + 10.0 * c,
                      "F_y": 20.0 + 5.0 * c, "speed": 10.0, "duration": 600,
                      "split": "seen"} for c in range(n_cases)],
    }
    return WindowStore(rng.normal(size=(n, len(meta["temp_ids"]), window)),
                       rng.normal(size=(n, len(meta["vib_ids"]), window)),
                       rng.normal(size=(n, window)),
                       y + rng.normal(scale=0.01, size=(n, 2)),
                       case_ids.astype(np.int64), meta)


class StubModel:
    """Deterministic function of the inputs; not an HTGNN, so the harness
    takes the stacked-channel path."""

    def __init__(self, fn):
        self.fn = fn

    def forward(self, stacked, training=False, rng=None):
        from htgnn.tensor import Tensor
        data = stacked.data if hasattr(stacked, "data") else stacked
        return Tensor(self.fn(np.asarray(data)))


def identity_norm(n_targets=2):
    return Normalization(0.0, 1.0, 0.0, 1.0, 0.0, 1.0,
                         [0.0] * n_targets, [1.0] * n_targets)


class TestMakeSplit:
    def test_basic_properties(self):
        plan = make_split(range(56), holdout_count=12, seed=0)
        assert len(plan.unseen_conditions) == 12
        assert len(plan.train_conditions) == 44
        assert set(plan.test_conditions) == set(range(56))
        assert not set(plan.unseen_conditions) & set(plan.train_conditions)

    def test_deterministic_per_seed(self):
        a = make_split(range(56), 12, seed=3)
        b = make_split(range(56), 12, seed=3)
        c = make_split(range(56), 12, seed=4)
        assert a.unseen_conditions == b.unseen_conditions
        assert a.unseen_conditions != c.unseen_conditions

    def test_zero_holdout(self):
        plan = make_split(range(5), 0, seed=0)
        assert plan.unseen_conditions == ()
        assert plan.train_conditions == (0, 1, 2, 3, 4)

    def test_infeasible_holdout(self):
        with pytest.raises(ValueError):
            make_split(range(5), 5, seed=0)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            make_split([1, 1, 2], 1, seed=0)


class TestSplitPlanInvariants:
    def test_unseen_outside_test_rejected(self):
        with pytest.raises(ValueError):
            SplitPlan((0, 1), (0, 1), (2,), 0)

    def test_unseen_in_train_rejected(self):
        with pytest.raises(ValueError):
            SplitPlan((0, 1), (0, 1, 2), (1, 2), 0)

    def test_seen_test_from_outside_train_rejected(self):
        with pytest.raises(ValueError):
            SplitPlan((0,), (0, 1, 2), (2,), 0)


class TestAssignWindows:
    def test_partition_and_leakage(self):
        store = toy_store()
        plan = make_split(range(6), 2, seed=1)
        a = assign_windows(store, plan)
        all_idx = np.concatenate([a.train_idx, a.val_idx, a.test_idx])
        assert sorted(all_idx.tolist()) == list(range(len(store)))
        unseen = set(plan.unseen_conditions)
        assert not set(store.case_ids[a.train_idx].tolist()) & unseen
        assert not set(store.case_ids[a.val_idx].tolist()) & unseen

    def test_tail_goes_to_test(self):
        store = toy_store(n_cases=2, per_case=10)
        plan = SplitPlan((0, 1), (0, 1), (), 0)
        a = assign_windows(store, plan, seen_test_fraction=0.3)
        # last 3 of each case's 10 windows are test windows
        assert set(a.test_idx.tolist()) == {7, 8, 9, 17, 18, 19}

    def test_unseen_case_entirely_in_test(self):
        store = toy_store(n_cases=3, per_case=4)
        plan = SplitPlan((0, 1), (0, 1, 2), (2,), 0)
        a = assign_windows(store, plan)
        assert set(np.flatnonzero(store.case_ids == 2)) <= set(a.test_idx)

    def test_val_fraction(self):
        store = toy_store(n_cases=4, per_case=10)
        plan = SplitPlan((0, 1, 2, 3), (0, 1, 2, 3), (), 0)
        a = assign_windows(store, plan, val_fraction=0.25,
                           seen_test_fraction=0.0)
        assert a.val_idx.size == 10
        assert a.train_idx.size == 30

    def test_missing_condition_rejected(self):
        store = toy_store(n_cases=3)
        plan = SplitPlan((0, 1), (0, 1), (), 0)
        with pytest.raises(ValueError):
            assign_windows(store, plan)

    def test_deterministic_for_plan_seed(self):
        store = toy_store()
        plan = make_split(range(6), 1, seed=5)
        a = assign_windows(store, plan)
        b = assign_windows(store, plan)
        assert np.array_equal(a.train_idx, b.train_idx)
        assert np.array_equal(a.val_idx, b.val_idx)


class TestNormalization:
    def test_fit_and_roundtrip(self):
        store = toy_store()
        idx = np.arange(30)
        norm = Normalization.fit(store, idx)
        xt, xv, w = norm.apply(store.x_t[idx], store.x_v[idx], store.w[idx])
        assert abs(xt.mean()) < 1e-10 and abs(xt.std() - 1.0) < 1e-10
        assert abs(w.mean()) < 1e-10
        y = store.y[idx]
        z = norm.standardize_y(y)
        assert np.abs(z.mean(axis=0)).max() < 1e-10
        assert np.allclose(norm.destandardize_y(z), y, atol=1e-9)

    def test_scalar_feature_stats_commute_with_permutation(self):
        store = toy_store()
        norm = Normalization.fit(store, np.arange(30))
        perm = np.random.default_rng(0).permutation(store.x_t.shape[1])
        a, _, _ = norm.apply(store.x_t[:4], store.x_v[:4], store.w[:4])
        b, _, _ = norm.apply(store.x_t[:4, perm], store.x_v[:4], store.w[:4])
        assert np.array_equal(a[:, perm], b)

    def test_empty_train_rejected(self):
        with pytest.raises(ValueError):
            Normalization.fit(toy_store(), np.array([], dtype=np.int64))


class TestTrainState:
    def test_stops_at_epoch_eleven_after_best(self):
        """With patience 10, a best at epoch 0 followed by monotonically
        worsening losses stops after epoch 10 (the 11th epoch)."""
        cfg = TrainConfig(patience=10, min_epochs=0)
        state = TrainState()
        stopped_at = None
        for epoch in range(40):
            state.epoch = epoch
            state.update(1.0 + epoch)  # epoch 0 is the best
            if state.should_stop(cfg):
                stopped_at = epoch
                break
        assert stopped_at == 10
        assert state.best_epoch == 0

    def test_improvement_resets_counter(self):
        cfg = TrainConfig(patience=2, min_epochs=0)
        state = TrainState()
        for epoch, loss in enumerate([5.0, 4.0, 4.5, 3.0, 3.5, 3.6]):
            state.epoch = epoch
            state.update(loss)
            assert not state.should_stop(cfg) or epoch == 5
        assert state.best_epoch == 3

    def test_min_epochs_defers_stop(self):
        cfg = TrainConfig(patience=1, min_epochs=10)
        state = TrainState()
        for epoch in range(5):
            state.epoch = epoch
            state.update(1.0 + epoch)
            assert not state.should_stop(cfg)


class TestTraining:
    def test_htgnn_smoke_and_checkpoint_roundtrip(self, tmp_path):
        from htgnn.graph import build_bearing_graph, default_layout
        layout = default_layout()
        graph = build_bearing_graph(layout)
        temp_ids = list(graph.node_order["T"])
        vib_ids = list(graph.node_order["V"])
        store = toy_store(n_cases=4, per_case=8, temp_ids=temp_ids,
                          vib_ids=vib_ids, window=12)
        plan = make_split(range(4), 1, seed=0)
        a = assign_windows(store, plan)
        mcfg = ModelConfig(node_embedding_dim=2, gnn_layers=1, gnn_hidden=4,
                           head_hidden=4, window=12)
        tcfg = TrainConfig(max_epochs=2, min_epochs=0, batch_size=8)
        best, meta, log = train(store, a, "htgnn", seed=0, graph=graph,
                                model_cfg=mcfg, train_cfg=tcfg)
        assert len(log) == 2
        assert meta["kind"] == "htgnn"

        path = tmp_path / "m.npz"
        checkpoint_from_training(path, best, meta)
        from htgnn.checkpoint import load_checkpoint
        params, meta2 = load_checkpoint(path)
        model, norm, g2 = model_from_checkpoint(params, meta2)
        pred = predict(model, norm, store.x_t[:3], store.x_v[:3], store.w[:3])
        assert pred.shape == (3, 2)
        assert np.all(np.isfinite(pred))

    def test_cnn_smoke(self):
        store = toy_store(n_cases=3, per_case=8)
        # the toy store's 2+1 channels need a matching toy graph
        from htgnn.graph import SensorNode, build_bearing_graph
        layout = [SensorNode("t0", "T", "T_OR", 1, 0.0),
                  SensorNode("t1", "T", "T_OR", 1, 90.0),
                  SensorNode("v0", "V", "V_AX", 1, 0.0)]
        graph = build_bearing_graph(layout)
        plan = make_split(range(3), 1, seed=0)
        a = assign_windows(store, plan)
        bcfg = BaselineConfig(layers=1, channels=3, hidden=4, kernel=3,
                              dropout=0.0, batchnorm=False)
        tcfg = TrainConfig(max_epochs=1, min_epochs=0, batch_size=8)
        best, meta, _ = train(store, a, "cnn", seed=0, graph=graph,
                              model_cfg=bcfg, train_cfg=tcfg)
        assert meta["kind"] == "cnn"
        model, norm, _ = model_from_checkpoint(best, meta)
        pred = predict(model, norm, store.x_t[:2], store.x_v[:2], store.w[:2])
        assert pred.shape == (2, 2)

    def test_unknown_kind_rejected(self):
        store = toy_store()
        plan = make_split(range(6), 1, seed=0)
        a = assign_windows(store, plan)
        with pytest.raises(ValueError):
            train(store, a, "transformer", seed=0)

    def test_channel_order_mismatch_rejected(self):
        from htgnn.graph import build_bearing_graph, default_layout
        graph = build_bearing_graph(default_layout())
        store = toy_store()  # t0/t1/v0 do not match the default graph
        plan = make_split(range(6), 1, seed=0)
        a = assign_windows(store, plan)
        with pytest.raises(ValueError):
            train(store, a, "htgnn", seed=0, graph=graph)

    def test_divergence_detected(self):
        from htgnn.graph import SensorNode, build_bearing_graph
        layout = [SensorNode("t0", "T", "T_OR", 1, 0.0),
                  SensorNode("t1", "T", "T_OR", 1, 90.0),
                  SensorNode("v0", "V", "V_AX", 1, 0.0)]
        graph = build_bearing_graph(layout)
        store = toy_store(n_cases=3, per_case=8)
        store.x_t[0, 0, 0] = np.nan
        plan = make_split(range(3), 1, seed=0)
        a = assign_windows(store, plan)
        bcfg = BaselineConfig(layers=1, channels=2, hidden=2, kernel=3,
                              dropout=0.0, batchnorm=False)
        with pytest.raises(TrainingDiverged):
            train(store, a, "cnn", seed=0, graph=graph, model_cfg=bcfg,
                  train_cfg=TrainConfig(max_epochs=1, min_epochs=0,
                                        batch_size=32))


class TestEvaluate:
    def test_perfect_predictor_zero_error(self):
        store = toy_store()
        store.y = np.round(store.y)  # exact targets
        lookup = {int(c): store.y[np.flatnonzero(store.case_ids == c)[0]]
                  for c in range(6)}

        class Perfect:
            def forward(self, stacked, training=False, rng=None):
                from htgnn.tensor import Tensor
                data = stacked.data if hasattr(stacked, "data") else stacked
                n = np.asarray(data).shape[0]
                return Tensor(np.array([self.answers.pop(0)
                                        for _ in range(n)]))

        test_idx = np.arange(len(store))
        model = Perfect()
        model.answers = [store.y[i] for i in test_idx]
        rows, agg = evaluate(model, identity_norm(), store, test_idx,
                             unseen_conditions=[5])
        assert all(r.mae_fx < 1e-9 and r.mae_fy < 1e-9 for r in rows)
        assert agg["seen"]["mape_fx"] < 1e-9
        assert agg["unseen"]["mape_fx"] < 1e-9

    def test_constant_predictor_closed_form(self):
        store = toy_store(n_cases=2, per_case=5)
        store.y = np.stack([np.repeat([100.0, 200.0], 5),
                            np.repeat([50.0, 100.0], 5)], axis=1)
        model = StubModel(lambda d: np.tile([150.0, 75.0], (d.shape[0], 1)))
        rows, agg = evaluate(model, identity_norm(), store,
                             np.arange(10), unseen_conditions=[])
        by_case = {r.case_id: r for r in rows}
        assert by_case[0].mae_fx == 50.0 and by_case[1].mae_fx == 50.0
        assert by_case[0].mape_fx == pytest.approx(50.0)
        assert by_case[1].mape_fx == pytest.approx(25.0)
        assert agg["seen"]["mape_fx"] == pytest.approx(37.5)
        assert agg["unseen"]["mape_fx"] is None

    def test_mape_floor_excludes_near_zero_targets(self):
        store = toy_store(n_cases=1, per_case=4)
        store.y = np.stack([np.full(4, 0.5), np.full(4, 100.0)], axis=1)
        assert 0.5 < MAPE_FLOOR_KN
        model = StubModel(lambda d: np.tile([1.0, 90.0], (d.shape[0], 1)))
        rows, agg = evaluate(model, identity_norm(), store, np.arange(4),
                             unseen_conditions=[])
        assert rows[0].mape_fx is None
        assert rows[0].mape_fy == pytest.approx(10.0)
        assert rows[0].mae_fx == pytest.approx(0.5)
        assert agg["seen"]["mape_fx"] is None

    def test_batch_size_invariance(self):
        store = toy_store()
        model = StubModel(lambda d: d[:, :2, -1] * 3.0 + 1.0)
        idx = np.arange(len(store))
        _, agg_small = evaluate(model, identity_norm(), store, idx, [3],
                                batch_size=7)
        _, agg_big = evaluate(model, identity_norm(), store, idx, [3],
                              batch_size=1000)
        for split in ("seen", "unseen"):
            for k, v in agg_small[split].items():
                assert v == pytest.approx(agg_big[split][k])

    def test_empty_test_rejected(self):
        store = toy_store()
        with pytest.raises(ValueError):
            evaluate(StubModel(lambda d: d[:, :2, -1]), identity_norm(),
                     store, np.array([], dtype=np.int64), [])

    def test_metrics_csv_layout(self, tmp_path):
        rows = [CaseMetrics(0, 50.0, 20.0, 10.0, True, 1.0, 2.0, 2.0, 10.0),
                CaseMetrics(1, 0.5, 20.0, 10.0, False, 1.0, 2.0, None, 10.0)]
        agg = {"seen": {"mae_fx": 1.0, "mae_fy": 2.0, "mape_fx": 2.0,
                        "mape_fy": 10.0},
               "unseen": {"mae_fx": 1.0, "mae_fy": 2.0, "mape_fx": None,
                          "mape_fy": 10.0}}
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, rows, agg)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "case_id,F_x,F_y,speed,seen,mae_fx,mae_fy,mape_fx,mape_fy"
        assert lines[1].startswith("0,50.0,20.0,10.0,1,")
        assert ",," in lines[2]  # missing MAPE serialized as empty
        assert lines[3].startswith("seen_mean")
        assert lines[4].startswith("unseen_mean")


class TestAggregateRuns:
    def test_mean_and_std(self):
        runs = [{"seen": {"mae_fx": 1.0, "mae_fy": 1.0, "mape_fx": 10.0,
                          "mape_fy": 20.0},
                 "unseen": {"mae_fx": 2.0, "mae_fy": 2.0, "mape_fx": None,
                            "mape_fy": 40.0}},
                {"seen": {"mae_fx": 3.0, "mae_fy": 1.0, "mape_fx": 30.0,
                          "mape_fy": 20.0},
                 "unseen": {"mae_fx": 4.0, "mae_fy": 2.0, "mape_fx": None,
                            "mape_fy": 60.0}}]
        out = aggregate_runs(runs)
        assert out["seen"]["mae_fx"] == {"mean": 2.0, "std": 1.0}
        assert out["seen"]["mape_fx"]["mean"] == 20.0
        assert out["unseen"]["mape_fx"] is None
        assert out["unseen"]["mape_fy"] == {"mean": 50.0, "std": 10.0}
