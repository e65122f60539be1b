import dataclasses

import numpy as np
import pytest

import graph_unlearn as gu
from graph_unlearn.errors import UnsupportedClassError, ValidationError
from graph_unlearn.models import GCN, ModelParams
from graph_unlearn.unlearning import cnnf_filtered_neighbors
from conftest import random_graph


def make_splits(train, val, test, unlearning=None):
    splits = gu.merge_train_val(
        gu.SplitIndices(train=np.asarray(train, np.int64),
                        val=np.asarray(val, np.int64),
                        test=np.asarray(test, np.int64))
    )
    if unlearning is not None:
        unlearning = np.asarray(unlearning, np.int64)
        return dataclasses.replace(
            splits,
            unlearning=unlearning,
            retained=np.setdiff1d(splits.labeled, unlearning),
        )
    return splits


class TestClassMeanPosteriors:
    def test_two_node_mean(self):
        z = np.array([[0.8, 0.2], [0.6, 0.4], [0.5, 0.5]])
        labels = np.array([0, 0, 1])
        table = gu.class_mean_posteriors(z, labels, [0, 1, 2])
        np.testing.assert_allclose(table.row(0), [0.7, 0.3])
        np.testing.assert_allclose(table.row(1), [0.5, 0.5])

    def test_single_node_per_class(self):
        z = np.array([[0.9, 0.1], [0.3, 0.7]])
        table = gu.class_mean_posteriors(z, np.array([0, 1]), [0, 1])
        np.testing.assert_array_equal(table.row(0), z[0])
        np.testing.assert_array_equal(table.row(1), z[1])

    def test_grouped_mean_oracle(self):
        rng = gu.make_rng(0)
        z = rng.random((50, 4))
        z /= z.sum(axis=1, keepdims=True)
        labels = rng.integers(0, 4, 50)
        test_idx = np.sort(rng.choice(50, 30, replace=False))
        table = gu.class_mean_posteriors(z, labels, test_idx)
        for cls in range(4):
            members = [i for i in test_idx if labels[i] == cls]
            if members:
                np.testing.assert_allclose(
                    table.row(cls), np.mean([z[i] for i in members], axis=0)
                )
                assert table.support[cls] == len(members)

    def test_zero_support_flagged_not_fatal(self):
        z = np.array([[1.0, 0.0]])
        table = gu.class_mean_posteriors(z, np.array([0]), [0])
        assert table.support[1] == 0
        with pytest.raises(UnsupportedClassError, match="class 1"):
            table.row(1)

    def test_empty_test_idx_rejected(self):
        with pytest.raises(ValidationError):
            gu.class_mean_posteriors(np.ones((1, 2)), np.array([0]), [])


def two_class_fixture():
    """6 nodes: labeled {0,1,2}, test {3,4,5}; posterior table by hand."""
    labels = np.array([0, 1, 0, 0, 1, 0])
    z = np.array([
        [0.9, 0.1], [0.2, 0.8], [0.7, 0.3],
        [0.8, 0.2], [0.3, 0.7], [0.6, 0.4],
    ])
    splits = make_splits([0, 1], [2], [3, 4, 5], unlearning=[0])
    table = gu.class_mean_posteriors(z, labels, splits.test)
    return labels, z, splits, table


class TestClrTargets:
    def test_empty_unlearning_is_one_hot(self):
        labels, z, _, table = two_class_fixture()
        splits = make_splits([0, 1], [2], [3, 4, 5], unlearning=[])
        targets = gu.clr_targets(labels, splits, table)
        one_hot = gu.TargetTable.one_hot(labels, splits.labeled, 2)
        np.testing.assert_array_equal(
            targets.matrix[splits.labeled], one_hot.matrix[splits.labeled]
        )
        assert targets.soft.size == 0

    def test_single_replacement_matches_table_row(self):
        labels, z, splits, table = two_class_fixture()
        targets = gu.clr_targets(labels, splits, table)
        # node 0 has class 0; test nodes of class 0 are 3 and 5
        np.testing.assert_allclose(targets.matrix[0], [(0.8 + 0.6) / 2, (0.2 + 0.4) / 2])
        assert targets.soft.tolist() == [0]
        np.testing.assert_array_equal(targets.matrix[1], [0.0, 1.0])
        np.testing.assert_array_equal(targets.matrix[2], [1.0, 0.0])

    def test_lookup_oracle_many_nodes(self):
        rng = gu.make_rng(1)
        g = random_graph(rng, 40, 5, 3, p=0.15)
        z = rng.random((40, 3))
        z /= z.sum(axis=1, keepdims=True)
        splits = make_splits(np.arange(16), np.arange(16, 20), np.arange(20, 40))
        splits = gu.sample_unlearning_set(splits, 0.5, rng)
        table = gu.class_mean_posteriors(z, g.labels, splits.test)
        targets = gu.clr_targets(g.labels, splits, table)
        for v in splits.unlearning:
            np.testing.assert_array_equal(
                targets.matrix[v], table.row(int(g.labels[v]))
            )
        for v in splits.retained:
            assert targets.matrix[v, g.labels[v]] == 1.0

    def test_unsupported_class_error(self):
        labels = np.array([1, 0, 0])
        z = np.array([[0.5, 0.5]] * 3)
        splits = make_splits([0], [1], [2], unlearning=[0])
        table = gu.class_mean_posteriors(z, labels, splits.test)  # test node class 0
        with pytest.raises(UnsupportedClassError, match="class 1"):
            gu.clr_targets(labels, splits, table)


class TestTnmppTargets:
    def _line_graph(self, labels, edges, train, val, test, unlearning):
        g = gu.Graph(features=np.zeros((len(labels), 2)),
                     labels=np.asarray(labels, np.int64),
                     edges=np.asarray(edges, np.int64), num_classes=2)
        return g, gu.build_adjacency(g), make_splits(train, val, test, unlearning)

    def test_mean_of_two_neighbors(self):
        g, adj, splits = self._line_graph(
            [0, 0, 1], [[0, 1], [1, 2]], [1], [], [0, 2], unlearning=[1]
        )
        z = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
        table = gu.class_mean_posteriors(z, g.labels, splits.test)
        targets = gu.tnmpp_targets(adj, z, splits, g.labels, table)
        np.testing.assert_allclose(targets.matrix[1], [0.5, 0.5])

    def test_single_neighbor(self):
        g, adj, splits = self._line_graph(
            [0, 0], [[0, 1]], [0], [], [1], unlearning=[0]
        )
        z = np.array([[0.9, 0.1], [0.25, 0.75]])
        table = gu.class_mean_posteriors(z, g.labels, splits.test)
        targets = gu.tnmpp_targets(adj, z, splits, g.labels, table)
        np.testing.assert_array_equal(targets.matrix[0], z[1])

    def test_training_neighbors_are_included(self):
        # neighbor 0 is a retained TRAIN node; its posterior must enter the mean
        g, adj, splits = self._line_graph(
            [0, 0, 0], [[0, 1], [1, 2]], [0, 1], [], [2], unlearning=[1]
        )
        z = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
        table = gu.class_mean_posteriors(z, g.labels, splits.test)
        targets = gu.tnmpp_targets(adj, z, splits, g.labels, table)
        np.testing.assert_allclose(targets.matrix[1], [0.5, 0.5])

    def test_scan_mean_oracle(self):
        rng = gu.make_rng(2)
        g = random_graph(rng, 30, 4, 3, p=0.2)
        adj = gu.build_adjacency(g)
        z = rng.random((30, 3))
        z /= z.sum(axis=1, keepdims=True)
        splits = make_splits(np.arange(12), np.arange(12, 15), np.arange(15, 30))
        splits = gu.sample_unlearning_set(splits, 0.4, rng)
        table = gu.class_mean_posteriors(z, g.labels, splits.test)
        targets = gu.tnmpp_targets(adj, z, splits, g.labels, table)
        for v in splits.unlearning:
            nbrs = [int(b) for a, b in g.edges if a == v]
            nbrs += [int(a) for a, b in g.edges if b == v]
            if nbrs:
                np.testing.assert_allclose(
                    targets.matrix[v], np.mean([z[u] for u in nbrs], axis=0)
                )
            else:
                np.testing.assert_array_equal(
                    targets.matrix[v], table.row(int(g.labels[v]))
                )

    def test_isolated_falls_back_to_class_mean(self):
        g = gu.Graph(features=np.zeros((3, 2)), labels=[0, 0, 0],
                     edges=np.empty((0, 2), np.int64), num_classes=2)
        adj = gu.build_adjacency(g)
        splits = make_splits([0], [], [1, 2], unlearning=[0])
        z = np.array([[0.9, 0.1], [0.6, 0.4], [0.8, 0.2]])
        table = gu.class_mean_posteriors(z, g.labels, splits.test)
        targets = gu.tnmpp_targets(adj, z, splits, g.labels, table)
        np.testing.assert_allclose(targets.matrix[0], [0.7, 0.3])


class TestCnnfTargets:
    def test_filter_keeps_single_survivor(self):
        # v=0 class 1; neighbors: 1 (train, class 1), 2 (test, class 1), 3 (test, class 0)
        labels = np.array([1, 1, 1, 0, 1])
        g = gu.Graph(features=np.zeros((5, 2)), labels=labels,
                     edges=[[0, 1], [0, 2], [0, 3]], num_classes=2)
        adj = gu.build_adjacency(g)
        splits = make_splits([0, 1], [], [2, 3, 4], unlearning=[0])
        z = np.array([[0.5, 0.5], [0.1, 0.9], [0.35, 0.65], [0.8, 0.2], [0.2, 0.8]])
        table = gu.class_mean_posteriors(z, labels, splits.test)
        targets = gu.cnnf_targets(adj, z, labels, splits, table)
        np.testing.assert_array_equal(targets.matrix[0], z[2])

    def test_empty_filter_falls_back_to_class_mean(self):
        # v=0's only neighbor is labeled, so the filtered set is empty
        labels = np.array([1, 1, 0, 1])
        g = gu.Graph(features=np.zeros((4, 2)), labels=labels,
                     edges=[[0, 1]], num_classes=2)
        adj = gu.build_adjacency(g)
        splits = make_splits([0, 1], [], [2, 3], unlearning=[0])
        z = np.array([[0.5, 0.5], [0.1, 0.9], [0.9, 0.1], [0.3, 0.7]])
        table = gu.class_mean_posteriors(z, labels, splits.test)
        targets = gu.cnnf_targets(adj, z, labels, splits, table)
        np.testing.assert_array_equal(targets.matrix[0], z[3])  # class-1 test mean

    def test_brute_force_filter_oracle(self):
        bundle = gu.generate_synthetic(40, 6, 3, 0.25, 0.08, 2.0, seed=4)
        g = bundle.graph
        adj = gu.build_adjacency(g)
        rng = gu.make_rng(5)
        z = rng.random((40, 3))
        z /= z.sum(axis=1, keepdims=True)
        splits = gu.sample_unlearning_set(gu.merge_train_val(bundle.splits), 0.3, rng)
        table = gu.class_mean_posteriors(z, g.labels, splits.test)
        targets = gu.cnnf_targets(adj, z, g.labels, splits, table)
        labeled = set(splits.labeled.tolist())
        for v in splits.unlearning:
            nbrs = {int(b) for a, b in g.edges if a == v}
            nbrs |= {int(a) for a, b in g.edges if b == v}
            kept = sorted(
                u for u in nbrs if u not in labeled and g.labels[u] == g.labels[v]
            )
            assert cnnf_filtered_neighbors(adj, g.labels, splits, int(v)).tolist() == kept
            if kept:
                np.testing.assert_allclose(
                    targets.matrix[v], np.mean([z[u] for u in kept], axis=0)
                )
            else:
                np.testing.assert_array_equal(
                    targets.matrix[v], table.row(int(g.labels[v]))
                )

    def test_all_isolated_equals_clr(self):
        g = gu.Graph(features=np.zeros((5, 2)), labels=[0, 1, 0, 1, 0],
                     edges=np.empty((0, 2), np.int64), num_classes=2)
        adj = gu.build_adjacency(g)
        splits = make_splits([0, 1], [], [2, 3, 4], unlearning=[0, 1])
        rng = gu.make_rng(6)
        z = rng.random((5, 2))
        z /= z.sum(axis=1, keepdims=True)
        table = gu.class_mean_posteriors(z, g.labels, splits.test)
        cnnf = gu.cnnf_targets(adj, z, g.labels, splits, table)
        clr = gu.clr_targets(g.labels, splits, table)
        np.testing.assert_array_equal(cnnf.matrix, clr.matrix)

    def test_fallback_unsupported_class_error(self):
        labels = np.array([1, 0, 0])
        g = gu.Graph(features=np.zeros((3, 2)), labels=labels,
                     edges=np.empty((0, 2), np.int64), num_classes=2)
        adj = gu.build_adjacency(g)
        splits = make_splits([0], [1], [2], unlearning=[0])
        z = np.full((3, 2), 0.5)
        table = gu.class_mean_posteriors(z, labels, splits.test)
        with pytest.raises(UnsupportedClassError, match="class 1"):
            gu.cnnf_targets(adj, z, labels, splits, table)


class TestTargetLocality:
    def test_targets_differ_exactly_on_unlearning_set(self):
        rng = gu.make_rng(7)
        for trial in range(10):
            bundle = gu.generate_synthetic(
                30, 5, 3, 0.3, 0.1, 2.0, seed=100 + trial
            )
            g = bundle.graph
            adj = gu.build_adjacency(g)
            z = rng.random((30, 3))
            z /= z.sum(axis=1, keepdims=True)
            # keep posteriors away from exact one-hot so replacement != original
            z = 0.9 * z + 0.1 / 3
            splits = gu.sample_unlearning_set(
                gu.merge_train_val(bundle.splits), 0.3, rng
            )
            table = gu.class_mean_posteriors(z, g.labels, splits.test)
            one_hot = gu.TargetTable.one_hot(g.labels, splits.labeled, 3)
            for targets in (
                gu.clr_targets(g.labels, splits, table),
                gu.tnmpp_targets(adj, z, splits, g.labels, table),
                gu.cnnf_targets(adj, z, g.labels, splits, table),
            ):
                diff = {
                    int(v) for v in splits.labeled
                    if not np.array_equal(targets.matrix[v], one_hot.matrix[v])
                }
                assert diff == set(splits.unlearning.tolist())
                assert np.array_equal(targets.soft, splits.unlearning)
                rows = targets.matrix[splits.unlearning]
                assert np.all(rows >= 0)
                np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-9)


def saturated_model(bundle, adj, splits, seed=3):
    """Train briefly, then scale the output layer so the softmax saturates to
    exactly one-hot posteriors on the labeled nodes (zero gradient)."""
    config = gu.ModelConfig(max_epochs=400, seed=seed)
    targets = gu.TargetTable.one_hot(bundle.graph.labels, splits.labeled,
                                     bundle.graph.num_classes)
    params, _ = gu.train(bundle.graph, adj, config, gu.make_rng(seed),
                         splits.labeled, targets)
    sat = ModelParams(GCN, [params.weights[0].copy(), params.weights[1] * 1e6])
    z = gu.model_forward(adj, bundle.graph.features, sat).posteriors
    assert np.all(z[splits.labeled].max(axis=1) == 1.0)
    return sat, targets


class TestFineTune:
    def test_noop_converges_immediately(self, easy_bundle):
        adj = gu.build_adjacency(easy_bundle.graph)
        splits = gu.merge_train_val(easy_bundle.splits)
        sat, targets = saturated_model(easy_bundle, adj, splits)
        config = gu.FineTuneConfig()
        result = gu.fine_tune(sat, easy_bundle.graph, adj, targets,
                              splits.labeled, config)
        assert result.report.epochs_run <= config.window + 1
        for a, b in zip(result.params.weights, sat.weights):
            assert np.array_equal(a, b)

    def test_unlearning_ce_rises_retained_accuracy_close_to_retrain(
        self, trained_easy
    ):
        bundle, adj, splits, params_org, posteriors_org = trained_easy
        graph = bundle.graph
        splits = gu.sample_unlearning_set(splits, 0.2, gu.make_rng(8))
        table = gu.class_mean_posteriors(posteriors_org, graph.labels, splits.test)
        targets = gu.clr_targets(graph.labels, splits, table)
        result = gu.fine_tune(params_org, graph, adj, targets, splits.labeled,
                              gu.FineTuneConfig(), method="clr")
        z_after = gu.model_forward(adj, graph.features, result.params).posteriors
        one_hot = gu.TargetTable.one_hot(graph.labels, splits.labeled, 3)
        ce_before = gu.masked_cross_entropy(posteriors_org, one_hot, splits.unlearning)
        ce_after = gu.masked_cross_entropy(z_after, one_hot, splits.unlearning)
        assert ce_after > ce_before
        # retrain-from-scratch oracle on the same instance
        oracle = gu.retrain(graph, adj, splits, gu.ModelConfig(max_epochs=400, seed=5),
                            gu.make_rng(5))
        z_retrain = gu.model_forward(adj, graph.features, oracle.params).posteriors
        acc_ft = gu.accuracy(z_after, graph.labels, splits.retained)
        acc_rt = gu.accuracy(z_retrain, graph.labels, splits.retained)
        assert abs(acc_ft - acc_rt) <= 0.05

    def test_deterministic(self, trained_easy):
        bundle, adj, splits, params_org, posteriors_org = trained_easy
        splits = gu.sample_unlearning_set(splits, 0.2, gu.make_rng(9))
        table = gu.class_mean_posteriors(posteriors_org, bundle.graph.labels,
                                         splits.test)
        targets = gu.clr_targets(bundle.graph.labels, splits, table)
        r1 = gu.fine_tune(params_org, bundle.graph, adj, targets, splits.labeled,
                          gu.FineTuneConfig(max_epochs=40))
        r2 = gu.fine_tune(params_org, bundle.graph, adj, targets, splits.labeled,
                          gu.FineTuneConfig(max_epochs=40))
        for a, b in zip(r1.params.weights, r2.params.weights):
            assert np.array_equal(a, b)


class TestNaiveUnlearn:
    def test_vanishing_learning_rate_keeps_params(self, trained_easy):
        bundle, adj, splits, params_org, _ = trained_easy
        splits = gu.sample_unlearning_set(splits, 0.2, gu.make_rng(10))
        config = gu.FineTuneConfig(learning_rate=1e-12, max_epochs=1)
        result = gu.naive_unlearn(params_org, bundle.graph, adj,
                                  bundle.graph.labels, splits.unlearning, config)
        for a, b in zip(result.params.weights, params_org.weights):
            np.testing.assert_allclose(a, b, atol=1e-9)

    def test_wrecks_accuracy_below_clr(self, trained_easy):
        bundle, adj, splits, params_org, posteriors_org = trained_easy
        graph = bundle.graph
        splits = gu.sample_unlearning_set(splits, 0.2, gu.make_rng(11))
        config = gu.FineTuneConfig()
        naive = gu.naive_unlearn(params_org, graph, adj, graph.labels,
                                 splits.unlearning, config)
        z_naive = gu.model_forward(adj, graph.features, naive.params).posteriors
        table = gu.class_mean_posteriors(posteriors_org, graph.labels, splits.test)
        targets = gu.clr_targets(graph.labels, splits, table)
        clr = gu.fine_tune(params_org, graph, adj, targets, splits.labeled, config)
        z_clr = gu.model_forward(adj, graph.features, clr.params).posteriors
        acc_naive = gu.accuracy(z_naive, graph.labels, splits.test)
        acc_clr = gu.accuracy(z_clr, graph.labels, splits.test)
        assert acc_naive <= acc_clr

    def test_divergence_returns_last_finite_params(self, trained_easy):
        bundle, adj, splits, params_org, _ = trained_easy
        graph = bundle.graph
        splits = gu.sample_unlearning_set(splits, 0.2, gu.make_rng(12))
        config = gu.FineTuneConfig(learning_rate=1e160, max_epochs=50)
        with np.errstate(over="ignore", invalid="ignore"):
            result = gu.naive_unlearn(params_org, graph, adj, graph.labels,
                                      splits.unlearning, config)
        assert result.report.diverged_at is not None
        for w in result.params.weights:
            assert np.all(np.isfinite(w))

    def test_empty_unlearning_rejected(self, trained_easy):
        bundle, adj, splits, params_org, _ = trained_easy
        with pytest.raises(ValidationError):
            gu.naive_unlearn(params_org, bundle.graph, adj, bundle.graph.labels,
                             [], gu.FineTuneConfig())


class TestRetrain:
    def test_empty_retained_rejected(self, easy_bundle):
        adj = gu.build_adjacency(easy_bundle.graph)
        splits = gu.merge_train_val(easy_bundle.splits)
        splits = dataclasses.replace(
            splits, unlearning=splits.labeled, retained=np.array([], np.int64)
        )
        with pytest.raises(ValidationError):
            gu.retrain(easy_bundle.graph, adj, splits,
                       gu.ModelConfig(max_epochs=10, seed=0), gu.make_rng(0))

    def test_empty_unlearning_equals_original_training(self, easy_bundle):
        graph = easy_bundle.graph
        adj = gu.build_adjacency(graph)
        splits = gu.merge_train_val(easy_bundle.splits)
        full = dataclasses.replace(
            splits, unlearning=np.array([], np.int64), retained=splits.labeled
        )
        config = gu.ModelConfig(max_epochs=60, seed=21)
        result = gu.retrain(graph, adj, full, config, gu.make_rng(21))
        targets = gu.TargetTable.one_hot(graph.labels, splits.labeled, 3)
        params, _ = gu.train(graph, adj, config, gu.make_rng(21),
                             splits.labeled, targets)
        for a, b in zip(result.params.weights, params.weights):
            assert np.array_equal(a, b)

    def test_deterministic(self, trained_easy):
        bundle, adj, splits, _, _ = trained_easy
        splits = gu.sample_unlearning_set(splits, 0.4, gu.make_rng(13))
        config = gu.ModelConfig(max_epochs=50, seed=2)
        r1 = gu.retrain(bundle.graph, adj, splits, config, gu.make_rng(2))
        r2 = gu.retrain(bundle.graph, adj, splits, config, gu.make_rng(2))
        for a, b in zip(r1.params.weights, r2.params.weights):
            assert np.array_equal(a, b)


class TestResultSerialization:
    def test_save_round_trip(self, trained_easy, tmp_path):
        bundle, adj, splits, params_org, posteriors_org = trained_easy
        splits = gu.sample_unlearning_set(splits, 0.2, gu.make_rng(14))
        table = gu.class_mean_posteriors(posteriors_org, bundle.graph.labels,
                                         splits.test)
        targets = gu.clr_targets(bundle.graph.labels, splits, table)
        result = gu.fine_tune(
            params_org, bundle.graph, adj, targets, splits.labeled,
            gu.FineTuneConfig(max_epochs=20), method="clr",
            provenance={"seed": 14, "fraction": 0.2, "dataset": bundle.name},
        )
        result.save(tmp_path / "out")
        loaded, header = gu.load_checkpoint(tmp_path / "out" / "result.ckpt")
        for a, b in zip(result.params.weights, loaded.weights):
            assert np.array_equal(a, b)
        import json
        sidecar = json.loads((tmp_path / "out" / "provenance.json").read_text())
        assert sidecar["method"] == "clr"
        assert sidecar["fraction"] == 0.2
        assert sidecar["epochs_run"] == result.report.epochs_run
