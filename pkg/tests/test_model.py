"""Boosted-tree training, AUC, balancing, and cross-validation."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clickroles.errors import DataError, UsageError
from clickroles.features import ArticleFeatures
from clickroles.metrics import QuadrantLabel
from clickroles.model import (
    CONTENT_EDIT_FEATURES,
    GBDTConfig,
    GBDTModel,
    InstanceSet,
    NETWORK_FEATURES,
    balance,
    binarize_target,
    build_instances,
    cross_validate,
    load_model,
    log_loss,
    roc_auc,
    save_model,
    select_group,
    stratified_folds,
    train_gbdt,
    write_eval_report,
)


def pair_count_auc_exact(scores, labels) -> float:
    """O(n^2) oracle: fraction of (pos, neg) pairs ranked correctly,
    ties counting one half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    pos = s[y == 1][:, None]
    neg = s[y == 0][None, :]
    wins = (pos > neg).sum() + 0.5 * (pos == neg).sum()
    return float(wins) / (pos.shape[0] * neg.shape[1])


def separable_data(n: int, seed: int, d_noise: int = 2):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=n)
    noise = rng.normal(size=(n, d_noise))
    x = np.column_stack([x0, noise])
    y = (x0 > 0).astype(np.int8)
    return x, y


def stage_losses(model: GBDTModel, x, y) -> list[float]:
    scores = np.full(len(y), model.initial_score)
    losses = [log_loss(scores, y)]
    for tree in model.trees:
        scores = scores + model.learning_rate * tree.leaf_values(x)
        losses.append(log_loss(scores, y))
    return losses


def make_row(article="A", **overrides) -> ArticleFeatures:
    values = dict(
        article=article,
        searchshare=0.5,
        resistance=0.5,
        total_views=100,
        quadrant=QuadrantLabel.NAV_RELAY,
        in_degree=1,
        out_degree=1,
        degree=2,
        kcore=1,
        sections=1,
        figures=0,
        lists=0,
        tables=0,
        revisions=5,
        editors=2,
        age=1.0,
        size=10.0,
        topic_id=None,
    )
    values.update(overrides)
    return ArticleFeatures(**values)


class TestBinarize:
    def test_searchshare_above(self):
        assert binarize_target([0.7], "searchshare").tolist() == [1]

    def test_searchshare_boundary_is_zero(self):
        assert binarize_target([0.66], "searchshare").tolist() == [0]

    def test_resistance_boundary_is_relay(self):
        assert binarize_target([0.88], "resistance").tolist() == [1]
        assert binarize_target([0.89], "resistance").tolist() == [0]

    def test_custom_threshold_and_validation(self):
        assert binarize_target([0.5, 0.2], "searchshare", 0.4).tolist() == [1, 0]
        with pytest.raises(UsageError):
            binarize_target([0.5], "views")
        with pytest.raises(UsageError):
            binarize_target([0.5], "searchshare", 1.5)


class TestBuildInstances:
    def test_vector_layout(self):
        rows = [
            make_row("A", searchshare=0.9, in_degree=7, revisions=42, topic_id=1),
            make_row("B", searchshare=0.1, topic_id=0),
        ]
        inst, dropped = build_instances(rows, "searchshare")
        assert dropped == 0
        assert inst.feature_names[:3] == NETWORK_FEATURES
        assert inst.feature_names[3:11] == CONTENT_EDIT_FEATURES
        assert inst.feature_names[11:] == ("topic_0", "topic_1")
        a = inst.x[0]
        assert a[inst.feature_names.index("in_degree")] == 7
        assert a[inst.feature_names.index("revisions")] == 42
        assert a[inst.feature_names.index("topic_1")] == 1.0
        assert a[inst.feature_names.index("topic_0")] == 0.0
        assert inst.y.tolist() == [1, 0]

    def test_rows_without_topic_dropped(self):
        rows = [make_row("A", topic_id=0), make_row("B", topic_id=None)]
        inst, dropped = build_instances(rows, "searchshare")
        assert dropped == 1
        assert inst.articles == ("A",)

    def test_no_topics_at_all(self):
        rows = [make_row("A"), make_row("B")]
        inst, dropped = build_instances(rows, "resistance")
        assert dropped == 0
        assert all(not n.startswith("topic_") for n in inst.feature_names)


class TestSelectGroup:
    def make(self):
        rows = [make_row(f"R{i}", topic_id=i % 3) for i in range(6)]
        inst, _ = build_instances(rows, "searchshare")
        return inst

    def test_groups(self):
        inst = self.make()
        assert select_group(inst, "network").feature_names == NETWORK_FEATURES
        assert select_group(inst, "content-edit").feature_names == CONTENT_EDIT_FEATURES
        assert select_group(inst, "topic").feature_names == ("topic_0", "topic_1", "topic_2")
        assert select_group(inst, "all").feature_names == inst.feature_names

    def test_unknown_group(self):
        with pytest.raises(UsageError):
            select_group(self.make(), "semantic")

    def test_topic_group_without_topics(self):
        rows = [make_row("A"), make_row("B")]
        inst, _ = build_instances(rows, "searchshare")
        with pytest.raises(UsageError):
            select_group(inst, "topic")


class TestBalance:
    def make(self, n_pos, n_neg):
        x = np.arange(float(n_pos + n_neg))[:, None]
        y = np.asarray([1] * n_pos + [0] * n_neg, dtype=np.int8)
        arts = tuple(f"A{i}" for i in range(n_pos + n_neg))
        return InstanceSet(arts, ("f0",), x, y)

    def test_downsamples_majority(self):
        out = balance(self.make(100, 40), seed=0)
        assert int((out.y == 1).sum()) == 40
        assert int((out.y == 0).sum()) == 40

    def test_already_balanced_unchanged(self):
        inst = self.make(30, 30)
        out = balance(inst, seed=5)
        assert out.articles == inst.articles
        assert np.array_equal(out.x, inst.x)

    def test_same_seed_same_sample(self):
        inst = self.make(80, 20)
        a = balance(inst, seed=9)
        b = balance(inst, seed=9)
        assert a.articles == b.articles

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            balance(self.make(10, 0), seed=0)


class TestRocAuc:
    def test_perfect(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_tied(self):
        assert roc_auc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == 0.5

    def test_single_class(self):
        with pytest.raises(DataError):
            roc_auc([0.1, 0.2], [1, 1])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_pair_counting(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10, 200))
        scores = rng.choice([0.1, 0.25, 0.5, 0.75, 0.9], size=n)  # force ties
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert roc_auc(scores, labels) == pair_count_auc_exact(scores, labels)

    @given(
        st.lists(st.integers(0, 1000), min_size=4, max_size=60),
        st.randoms(use_true_random=False),
    )
    @settings(max_examples=40, deadline=None)
    def test_monotone_transform_invariant(self, grid, rnd):
        # scores on a coarse grid so the float transforms below cannot
        # collapse distinct values into ties
        scores = [g / 1000.0 for g in grid]
        labels = [i % 2 for i in range(len(scores))]
        base = roc_auc(scores, labels)
        warped = [3.0 * s + 1.0 for s in scores]
        assert roc_auc(warped, labels) == pytest.approx(base, abs=1e-12)
        expped = list(np.exp(scores))
        assert roc_auc(expped, labels) == pytest.approx(base, abs=1e-12)


class TestTrainGbdt:
    def test_separable_training_auc(self):
        x, y = separable_data(500, seed=1)
        model = train_gbdt(x, y, GBDTConfig(n_trees=30, max_depth=3, min_leaf=5))
        auc = roc_auc(model.decision_scores(x), y)
        assert auc >= 0.99
        assert not model.prior_fallback

    def test_constant_features_prior(self):
        x = np.ones((40, 3))
        y = np.asarray([1] * 10 + [0] * 30, dtype=np.int8)
        model = train_gbdt(x, y, GBDTConfig(n_trees=5, min_leaf=2))
        assert model.prior_fallback
        expected = np.log(10 / 30)
        assert model.decision_scores(x) == pytest.approx(np.full(40, expected))

    def test_stump_matches_enumeration_oracle(self):
        x = np.asarray([[0.0, 5.0], [1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
        y = np.asarray([0, 0, 1, 1], dtype=np.int8)
        rate = 0.5
        model = train_gbdt(x, y, GBDTConfig(n_trees=1, max_depth=1, min_leaf=1, learning_rate=rate))

        # oracle: every (feature, midpoint) stump with Newton leaf values,
        # scored by resulting mean logistic loss
        initial = 0.0  # log(2/2)
        p0 = 0.5
        g = y - p0
        h = np.full(4, p0 * (1 - p0))
        best = None
        for j in range(x.shape[1]):
            vals = np.unique(x[:, j])
            for lo, hi in zip(vals[:-1], vals[1:]):
                thr = (lo + hi) / 2.0
                left = x[:, j] <= thr
                leaf_l = g[left].sum() / (h[left].sum() + 1e-12)
                leaf_r = g[~left].sum() / (h[~left].sum() + 1e-12)
                scores = initial + rate * np.where(left, leaf_l, leaf_r)
                loss = log_loss(scores, y)
                key = (loss, j, thr)
                if best is None or key < best[0]:
                    best = (key, j, thr, leaf_l, leaf_r)

        _, bj, bthr, bleaf_l, bleaf_r = best
        (tree,) = model.trees
        assert tree.feature[0] == bj
        assert tree.threshold[0] == bthr
        got_left = tree.value[tree.left[0]]
        got_right = tree.value[tree.right[0]]
        assert got_left == pytest.approx(bleaf_l, abs=1e-12)
        assert got_right == pytest.approx(bleaf_r, abs=1e-12)

    def test_loss_monotone_per_stage(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(300, 4))
        y = (x[:, 0] + 0.8 * rng.normal(size=300) > 0).astype(np.int8)
        model = train_gbdt(x, y, GBDTConfig(n_trees=40, max_depth=3, min_leaf=5))
        losses = stage_losses(model, x, y)
        for a, b in zip(losses, losses[1:]):
            assert b <= a

    def test_deterministic(self):
        x, y = separable_data(200, seed=4)
        cfg = GBDTConfig(n_trees=10, max_depth=3, min_leaf=5)
        m1 = train_gbdt(x, y, cfg)
        m2 = train_gbdt(x, y, cfg)
        assert np.array_equal(m1.decision_scores(x), m2.decision_scores(x))
        for t1, t2 in zip(m1.trees, m2.trees):
            assert np.array_equal(t1.feature, t2.feature)
            assert np.array_equal(t1.threshold, t2.threshold)
            assert np.array_equal(t1.value, t2.value)

    def test_depth_bound_respected(self):
        x, y = separable_data(300, seed=5)
        model = train_gbdt(x, y, GBDTConfig(n_trees=5, max_depth=2, min_leaf=5))
        for tree in model.trees:
            # depth-2 tree has at most 7 nodes
            assert len(tree.feature) <= 7

    def test_min_class_count(self):
        x = np.random.default_rng(0).normal(size=(5, 2))
        with pytest.raises(DataError):
            train_gbdt(x, np.asarray([1, 0, 0, 0, 0]), GBDTConfig(n_trees=1))


class TestStratifiedFolds:
    def test_partition_and_balance(self):
        rng = np.random.default_rng(8)
        y = (rng.random(137) < 0.3).astype(np.int8)
        folds = stratified_folds(y, n_folds=10, seed=1)
        assert len(folds) == 10
        joined = np.concatenate(folds)
        assert sorted(joined.tolist()) == list(range(137))
        pos_counts = [int(y[f].sum()) for f in folds]
        neg_counts = [len(f) - int(y[f].sum()) for f in folds]
        assert max(pos_counts) - min(pos_counts) <= 1
        assert max(neg_counts) - min(neg_counts) <= 1

    def test_seed_changes_assignment(self):
        y = np.asarray([0, 1] * 50, dtype=np.int8)
        f1 = stratified_folds(y, 10, seed=1)
        f2 = stratified_folds(y, 10, seed=2)
        assert any(not np.array_equal(a, b) for a, b in zip(f1, f2))

    def test_too_few_per_class(self):
        y = np.asarray([1] * 5 + [0] * 100, dtype=np.int8)
        with pytest.raises(DataError):
            stratified_folds(y, 10, seed=0)


def instance_set_from_arrays(x, y) -> InstanceSet:
    return InstanceSet(
        tuple(f"A{i}" for i in range(len(y))),
        tuple(f"f{j}" for j in range(x.shape[1])),
        np.asarray(x, dtype=float),
        np.asarray(y, dtype=np.int8),
    )


class TestCrossValidate:
    def test_separable_high_auc(self):
        x, y = separable_data(600, seed=6)
        inst = instance_set_from_arrays(x, y)
        report = cross_validate(
            inst, "all", GBDTConfig(n_trees=20, max_depth=3, min_leaf=5, seed=0), task="searchshare"
        )
        assert len(report.fold_aucs) == 10
        assert report.mean_auc >= 0.95

    def test_shuffled_labels_near_half(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(400, 3))
        means = []
        for rep in range(10):
            y = rng.permutation(np.asarray([0, 1] * 200, dtype=np.int8))
            inst = instance_set_from_arrays(x, y)
            report = cross_validate(
                inst, "all", GBDTConfig(n_trees=8, max_depth=2, min_leaf=20, seed=rep)
            )
            means.append(report.mean_auc)
        assert 0.45 <= float(np.mean(means)) <= 0.55

    def test_thread_count_invariant(self):
        x, y = separable_data(300, seed=7)
        inst = instance_set_from_arrays(x, y)
        cfg = GBDTConfig(n_trees=8, max_depth=2, min_leaf=5, seed=3)
        seq = cross_validate(inst, "all", cfg, threads=1)
        par = cross_validate(inst, "all", cfg, threads=4)
        assert seq.fold_aucs == par.fold_aucs

    def test_deterministic_report(self):
        x, y = separable_data(250, seed=9)
        inst = instance_set_from_arrays(x, y)
        cfg = GBDTConfig(n_trees=6, max_depth=2, min_leaf=5, seed=4)
        r1 = cross_validate(inst, "all", cfg)
        r2 = cross_validate(inst, "all", cfg)
        assert r1 == r2


class TestSerialization:
    def test_roundtrip_predictions(self, tmp_path):
        x, y = separable_data(200, seed=10)
        model = train_gbdt(x, y, GBDTConfig(n_trees=12, max_depth=3, min_leaf=5))
        path = tmp_path / "model.json"
        save_model(path, model)
        back = load_model(path)
        assert back.feature_names == model.feature_names
        assert np.array_equal(back.decision_scores(x), model.decision_scores(x))

    def test_version_check(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"format_version": 99}')
        with pytest.raises(DataError, match="version"):
            load_model(path)

    def test_report_csv(self, tmp_path):
        report = cross_validate(
            instance_set_from_arrays(*separable_data(200, seed=2)),
            "all",
            GBDTConfig(n_trees=4, max_depth=2, min_leaf=5, seed=1),
            task="searchshare",
        )
        path = tmp_path / "eval.csv"
        write_eval_report(path, [report])
        lines = path.read_text().splitlines()
        assert lines[0] == "task,feature_group,fold,auc"
        assert len(lines) == 12
        assert lines[-1].startswith("searchshare,all,mean,")
