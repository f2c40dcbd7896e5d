import json

import numpy as np
import pytest

from dain.core.rng import make_rng
from dain.data import AugmentParams, ViewTable
from dain.errors import EvaluationError, NumericError
from dain.harness import (
    InputPipeline,
    RunConfig,
    Stage,
    TrainConfig,
    cross_split_report,
    evaluate,
    is_saturated,
    preset_single_stream,
    preset_two_branch,
    parse_override,
    row_label,
    scope_parameters,
    train_staged,
)
from dain.net import LayerSpec, NetworkSpec, build_network

SIZE = 12


def make_table(n_classes=2, n_inst=4, n_cond=1, size=SIZE, seed=0, signal=0.3):
    """Tiny in-memory table whose class is encoded in colour and differential sign."""
    rng = np.random.default_rng(seed)
    rows = []
    inst_ids = []
    for c in range(n_classes):
        for i in range(n_inst):
            inst_ids.append(f"c{c}/{i}")
            for cond in range(n_cond):
                for t in range(9):
                    rows.append((c, len(inst_ids) - 1, cond, t))
    m = len(rows)
    labels = np.array([r[0] for r in rows])
    images = rng.normal(0.5, 0.1, (m, size, size, 3)).astype(np.float32)
    images[..., 0] += signal * (labels[:, None, None] - 0.5 * (n_classes - 1))
    diffs = rng.normal(0, 0.05, (m, size, size, 3)).astype(np.float32)
    diffs[..., 1] += signal * (labels[:, None, None] % 2 - 0.5)
    meta = np.array(rows)
    return ViewTable(images, diffs, labels, meta[:, 1], meta[:, 2], meta[:, 3], inst_ids,
                     [f"c{c}" for c in range(n_classes)])


def small_spec(arch="dain", n_classes=2):
    backbone = [LayerSpec("conv", 4), LayerSpec("relu"), LayerSpec("pool", window=2),
                LayerSpec("conv", 6), LayerSpec("relu"), LayerSpec("pool", window=2),
                LayerSpec("dense", 8), LayerSpec("relu"), LayerSpec("dropout", rate=0.5)]
    return NetworkSpec(backbone=backbone, fusion_arch=arch, num_classes=n_classes,
                       input_shape=(3, SIZE, SIZE))


AUG = AugmentParams(resize=14, stretch=0.1, flip_prob=0.5, crop=SIZE)


class TestConfig:
    def test_preset_single_stream(self):
        tc = preset_single_stream()
        assert tc.to_dict()["stages"] == [["last-dense", 5e-2, 5], ["all-dense", 1e-2, 5],
                                          ["all", 1e-3, "saturation"]]
        assert (tc.batch_size, tc.momentum, tc.dropout_rate) == (196, 0.9, 0.5)
        assert tc.lr_decay_factor == 0.1 and tc.augment.stretch == 0.1

    def test_preset_two_branch(self):
        tc = preset_two_branch()
        assert tc.to_dict()["stages"] == [["upper", 1e-3, 3], ["all", 1e-3, "saturation"]]
        assert tc.batch_size == 64 and tc.augment.stretch == 0.25

    @pytest.mark.parametrize("kw", [{"lr_decay_factor": 1.0}, {"lr_decay_factor": 0.0},
                                    {"batch_size": 0}, {"epoch_budget": 2}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig([Stage("all", 1e-2, 3)], **kw)

    def test_invalid_stage(self):
        with pytest.raises(ValueError):
            Stage("all", 0.0)
        with pytest.raises(ValueError):
            Stage("middle", 0.1)

    def test_roundtrip_dict(self):
        tc = preset_two_branch()
        d = tc.to_dict()
        assert TrainConfig(**d).to_dict() == d

    def test_run_config_overrides(self):
        cfg = RunConfig().with_overrides([parse_override("arch=single"),
                                          parse_override("channels=[4,8]"),
                                          parse_override("epochs=3")])
        assert cfg.arch == "single" and cfg.channels == [4, 8] and cfg.epochs == 3
        with pytest.raises(KeyError):
            RunConfig().with_overrides([("bogus", 1)])
        with pytest.raises(KeyError):
            RunConfig.from_dict({"arch": "dain", "nope": 1})

    def test_auto_schedule(self):
        assert RunConfig(arch="single").train_config().stages[0].scope == "last-dense"
        assert RunConfig(arch="dain").train_config().stages[0].scope == "upper"


def test_is_saturated():
    assert not is_saturated([10, 20], 3, 0.2)
    assert is_saturated([50, 50.1, 50.15, 50.19], 3, 0.2)
    assert not is_saturated([50, 50.1, 50.15, 50.2], 3, 0.2)


class TestScopes:
    @pytest.mark.parametrize("arch", ["single", "final", "intermediate", "dain"])
    def test_last_dense_is_classifiers(self, arch):
        net = build_network(small_spec(arch), 0)
        names = {p.name for p in scope_parameters(net, "last-dense")}
        assert names and all(".classifier." in n for n in names)
        assert len(names) == 2 * len(net.heads)

    def test_nesting(self):
        net = build_network(small_spec("dain"), 0)
        sets = [{id(p) for p in scope_parameters(net, s)}
                for s in ("last-dense", "all-dense", "upper", "all")]
        assert sets[0] < sets[1] <= sets[2] < sets[3]
        assert not any(".lower." in p.name for p in scope_parameters(net, "upper"))


class TestTraining:
    def test_freeze_contract(self):
        table = make_table()
        net = build_network(small_spec("dain"), 1)
        before = {p.name: p.value.copy() for p in net.parameters()}
        tc = TrainConfig([Stage("last-dense", 5e-2, 2)], batch_size=8, epoch_budget=2,
                         augment=AUG)
        train_staged(net, table, InputPipeline(AUG).fit(table), tc)
        for p in net.parameters():
            same = p.value.tobytes() == before[p.name].tobytes()
            assert same == (".classifier." not in p.name), p.name

    def test_loss_decreases(self):
        table = make_table(n_inst=8)
        net = build_network(small_spec("dain"), 2)
        tc = TrainConfig([Stage("upper", 1e-2, 1), Stage("all", 1e-2, None)], batch_size=8,
                         epoch_budget=6, augment=AUG)
        res = train_staged(net, table, InputPipeline(AUG).fit(table), tc)
        assert len(res.history) == 6
        assert res.losses[-1] < res.losses[0]

    def test_lr_monotone_in_final_stage(self):
        table = make_table(signal=0.0)
        net = build_network(small_spec("single"), 3)
        tc = TrainConfig([Stage("all", 1e-4, None)], batch_size=16, epoch_budget=8,
                         saturation_window=1, augment=AUG)
        res = train_staged(net, table, InputPipeline(AUG).fit(table), tc)
        lrs = [h["lr"] for h in res.history]
        assert all(b <= a for a, b in zip(lrs, lrs[1:]))

    def test_multiview_training_runs(self):
        table = make_table()
        net = build_network(small_spec("dain"), 4)
        tc = TrainConfig([Stage("all", 1e-2, 1)], batch_size=4, epoch_budget=1, augment=AUG,
                         n_views=3, combiner="filter3d")
        res = train_staged(net, table, InputPipeline(AUG).fit(table), tc)
        assert np.isfinite(res.losses[0])

    def test_non_finite_loss_aborts(self, tmp_path):
        table = make_table()
        net = build_network(small_spec("single"), 5)
        net.named_parameters()["a.classifier.b"].value[:] = np.nan
        tc = TrainConfig([Stage("all", 1e-2, 1)], batch_size=8, epoch_budget=1, augment=AUG)
        with pytest.raises(NumericError):
            train_staged(net, table, InputPipeline(AUG).fit(table), tc,
                         diagnostics_dir=tmp_path / "diag")
        assert (tmp_path / "diag" / "manifest.json").exists()

    def test_deterministic(self):
        table = make_table()
        tc = TrainConfig([Stage("all", 1e-2, 2)], batch_size=8, epoch_budget=2, augment=AUG)
        out = []
        for _ in range(2):
            net = build_network(small_spec("dain"), 6)
            train_staged(net, table, InputPipeline(AUG).fit(table), tc)
            out.append(b"".join(p.value.tobytes() for p in net.parameters()))
        assert out[0] == out[1]


class TestEvaluate:
    def test_oracle(self):
        table = make_table(n_classes=3, signal=1.0)
        pipe = InputPipeline(AugmentParams(resize=SIZE, stretch=0.0, crop=SIZE), normalize=False)

        def oracle(xv, xd, n_views, combiner):
            # red channel mean sits near label - 0.5
            return np.round(xv[:, 0].mean((1, 2)) + 0.5).astype(int)

        res = evaluate(oracle, table, pipe)
        assert res.accuracy == 1.0

    def test_random_predictor(self):
        n = 10_000
        labels = np.arange(n) % 8
        z = np.zeros((n, 2, 2, 3), np.float32)
        idx = np.arange(n)
        table = ViewTable(z, z, labels, idx, np.zeros(n, int), np.zeros(n, int),
                          [str(i) for i in range(n)], [str(k) for k in range(8)])
        rng = make_rng(9)
        pipe = InputPipeline(AugmentParams(resize=2, stretch=0.0, crop=2), normalize=False)
        res = evaluate(lambda xv, *a: rng.integers(0, 8, len(xv)), table, pipe, batch_size=500)
        assert abs(res.accuracy - 0.125) < 0.03
        np.testing.assert_array_equal(res.confusion.sum(1), np.bincount(labels))

    def test_confusion_rows_and_determinism(self):
        table = make_table(n_classes=3)
        net = build_network(small_spec("dain", 3), 7)
        pipe = InputPipeline(AUG).fit(table)
        a = evaluate(net, table, pipe)
        b = evaluate(net, table, pipe)
        np.testing.assert_array_equal(a.confusion, b.confusion)
        np.testing.assert_array_equal(a.confusion.sum(1), np.bincount(table.labels))

    def test_multiview_counts(self):
        table = make_table(n_classes=2, n_inst=3, n_cond=2)
        net = build_network(small_spec("dain"), 8)
        pipe = InputPipeline(AUG).fit(table)
        for comb in ("voting", "pooling", "filter3d"):
            res = evaluate(net, table, pipe, "multiview", comb, 4, seed=3)
            assert res.n_samples == 2 * 3 * 2
            again = evaluate(net, table, pipe, "multiview", comb, 4, seed=3)
            np.testing.assert_array_equal(res.confusion, again.confusion)

    def test_empty(self):
        table = make_table().subset(np.array([], dtype=int))
        with pytest.raises(EvaluationError):
            evaluate(lambda *a: [], table, InputPipeline(AUG, normalize=False))


class TestReport:
    def rec(self, row, split, acc, seed=0):
        return {"row": row, "split": split, "seed": seed, "accuracy": acc}

    def test_two_point_std(self):
        r = cross_split_report([self.rec("single view CNN", 1, 1.0),
                                self.rec("single view CNN", 2, 0.5)])
        row = r.rows["single view CNN"]
        assert row["mean"] == 0.75 and row["std"] == 0.25

    def test_single_split(self):
        r = cross_split_report([self.rec("single view CNN", 3, 0.6)])
        assert r.rows["single view CNN"]["std"] == 0.0

    def test_seed_average_then_split_stats(self):
        recs = [self.rec("x", 1, 0.2, 0), self.rec("x", 1, 0.4, 1), self.rec("x", 2, 0.9, 0)]
        row = cross_split_report(recs, rows=()).rows["x"]
        assert row["splits"] == {"1": pytest.approx(0.3), "2": 0.9}
        assert row["mean"] == pytest.approx(0.6, abs=1e-9)
        assert row["std"] == pytest.approx(0.3, abs=1e-9)

    def test_missing_cells_absent(self):
        r = cross_split_report([self.rec("single view CNN", 1, 0.5),
                                self.rec("single view DAIN (sum)", 2, 0.7)])
        assert r.rows["single view CNN"]["splits"]["2"] is None
        assert r.rows["multiview CNN (voting)"]["mean"] is None
        text = r.to_text()
        assert "absent" in text
        lines = text.splitlines()
        assert len({len(line) for line in lines}) == 1

    def test_json_byte_identical(self):
        recs = [self.rec("single view CNN", s, 0.1 * s) for s in (1, 2)]
        a, b = cross_split_report(recs), cross_split_report(list(reversed(recs)))
        assert a.to_json() == b.to_json() and a.to_text() == b.to_text()
        json.loads(a.to_json())

    @pytest.mark.parametrize("arch,op,comb,label", [
        ("single", "sum", "single", "single view CNN"),
        ("single", "sum", "voting", "multiview CNN (voting)"),
        ("dain", "sum", "pooling", "multiview DAIN (sum, pooling)"),
        ("dain", "max", "single", "single view DAIN (max)"),
    ])
    def test_row_label(self, arch, op, comb, label):
        assert row_label(arch, op, comb) == label
