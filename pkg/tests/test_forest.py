import numpy as np
import pytest

from amsdtree.data import Dataset, all_rows, select_rows
from amsdtree.forest import (
    Forest,
    ForestConfig,
    build_forest,
    deserialize_forest,
    predict_forest,
    predict_forest_dataset,
    predict_forest_proba,
    serialize_forest,
    tree_rng,
    vote_counts,
)
from amsdtree.splitters import SplitterStrategy
from amsdtree.synthetic import gaussian_mixture
from amsdtree.tree import (Leaf, TreeConfig, TreeFormatError, build_tree, node_to_dict, predict_dataset,
                           serialize_tree)


def small(seed=0, n=120, m=4):
    return gaussian_mixture(n, m, seed=seed)


def test_same_seed_is_byte_identical():
    ds = small()
    cfg = ForestConfig(n_trees=12, seed=7)
    a, b = build_forest(ds, cfg), build_forest(ds, cfg)
    assert serialize_forest(a) == serialize_forest(b)
    assert all(np.array_equal(x, y) for x, y in zip(a.bootstrap_indices, b.bootstrap_indices))
    assert np.array_equal(predict_forest_dataset(a, ds), predict_forest_dataset(b, ds))


def test_different_seeds_differ():
    ds = small()
    a = build_forest(ds, ForestConfig(n_trees=5, seed=1))
    b = build_forest(ds, ForestConfig(n_trees=5, seed=2))
    assert serialize_forest(a) != serialize_forest(b)


def test_parallel_equals_serial():
    ds = small(n=200)
    one = build_forest(ds, ForestConfig(n_trees=16, seed=3, workers=1))
    four = build_forest(ds, ForestConfig(n_trees=16, seed=3, workers=4))
    assert serialize_forest(one) == serialize_forest(four)


def test_tree_stream_does_not_depend_on_forest_size():
    ds = small()
    big = build_forest(ds, ForestConfig(n_trees=6, seed=5))
    few = build_forest(ds, ForestConfig(n_trees=2, seed=5))
    assert [node_to_dict(t.root) for t in few.trees] == [node_to_dict(t.root) for t in big.trees[:2]]
    assert tree_rng(5, 1).integers(0, 1 << 30) == tree_rng(5, 1).integers(0, 1 << 30)
    assert tree_rng(5, 1).integers(0, 1 << 30) != tree_rng(5, 2).integers(0, 1 << 30)


@pytest.mark.parametrize("strategy", ["exhaustive", "msd", "amsd"])
def test_identity_bootstrap_equals_single_tree(strategy, toy):
    tc = TreeConfig(SplitterStrategy.parse(strategy))
    cfg = ForestConfig(n_trees=1, mtry=toy.schema.n_attributes, bootstrap=False, tree_config=tc)
    f = build_forest(toy, cfg)
    t = build_tree(all_rows(toy), tc)
    assert serialize_tree(f.trees[0]) == serialize_tree(t)


def test_bootstrap_resamples_rows():
    ds = small()
    f = build_forest(ds, ForestConfig(n_trees=1, mtry=4, seed=0))
    idx = f.bootstrap_indices[0]
    assert idx.size == ds.row_count and np.unique(idx).size < ds.row_count
    f2 = build_forest(select_rows(ds, range(50)), ForestConfig(n_trees=1, bootstrap_size=30))
    assert f2.bootstrap_indices[0].size == 30 and f2.bootstrap_indices[0].max() < 50


def test_subspace_instrumentation():
    ds = small(m=9)
    logs = {}

    def factory(t):
        logs[t] = []
        return logs[t].append

    build_forest(ds, ForestConfig(n_trees=8, seed=1, workers=2), trace_factory=factory)
    assert sorted(logs) == list(range(8))
    for events in logs.values():
        assert events
        for ev in events:
            assert len(ev.candidates) <= 3  # floor(sqrt(9))
            assert ev.chosen.rule.attribute in ev.candidates


def _stub_forest(classes, n_classes=2):
    ds = Dataset.from_arrays(np.zeros((1, 1)), [0], class_labels=[str(c) for c in range(n_classes)])
    trees = []
    for c in classes:
        dist = tuple(1 if k == c else 0 for k in range(n_classes))
        t = build_tree(all_rows(ds), TreeConfig())
        t.root = Leaf(dist, c)
        trees.append(t)
    return Forest(trees, ds.schema, ForestConfig(n_trees=len(trees)), [(0, t) for t in range(len(trees))]), ds


def test_unanimous_vote():
    f, _ = _stub_forest([1, 1, 1])
    assert predict_forest(f, [0.0]) == 1
    assert predict_forest_proba(f, [0.0]).tolist() == [0.0, 1.0]


def test_tied_vote_goes_to_lowest_class():
    f, ds = _stub_forest([1] * 50 + [0] * 50)
    assert predict_forest(f, [0.0]) == 0
    assert predict_forest_dataset(f, ds).tolist() == [0]
    assert vote_counts(f, ds).tolist() == [[50, 50]]


def test_vote_fractions_sum_to_one(rng):
    ds = gaussian_mixture(150, 3, seed=4)
    ds3 = Dataset.from_arrays(np.column_stack(ds.columns), rng.integers(0, 3, 150))
    f = build_forest(ds3, ForestConfig(n_trees=7, seed=2))
    for row in np.column_stack(ds3.columns)[:40]:
        p = predict_forest_proba(f, row)
        assert abs(p.sum() - 1.0) <= 1e-12
        assert predict_forest(f, row) == int(np.argmax(p))


def test_round_trip_predictions():
    ds = small(n=150)
    f = build_forest(ds, ForestConfig(n_trees=10, seed=9))
    text = serialize_forest(f)
    back = deserialize_forest(text)
    assert serialize_forest(back) == text
    assert np.array_equal(predict_forest_dataset(back, ds), predict_forest_dataset(f, ds))
    assert back.seed_records == f.seed_records and back.config == f.config


def test_serialization_excludes_workers():
    ds = small()
    a = build_forest(ds, ForestConfig(n_trees=3, workers=1))
    b = build_forest(ds, ForestConfig(n_trees=3, workers=3))
    assert serialize_forest(a) == serialize_forest(b)
    assert "workers" not in serialize_forest(a)


def test_bad_documents():
    with pytest.raises(TreeFormatError):
        deserialize_forest('{"format": "amsdtree.tree/1"}')
    with pytest.raises(TreeFormatError):
        deserialize_forest('{"format": "amsdtree.forest/1"')


def test_config_errors():
    with pytest.raises(ValueError):
        ForestConfig(n_trees=0)
    with pytest.raises(ValueError):
        ForestConfig(mtry=0)
    with pytest.raises(ValueError):
        build_forest(small(m=2), ForestConfig(n_trees=1, mtry=3))
    with pytest.raises(ValueError):
        build_forest(select_rows(small(), []), ForestConfig(n_trees=1))


def test_default_mtry():
    assert ForestConfig().resolved_mtry(1) == 1
    assert ForestConfig().resolved_mtry(30) == 5


def test_forest_beats_tree_on_holdout():
    """100 trees vs one AMSD tree on 200 rows, 30% held out; median over 10 seeds."""
    forest_acc, tree_acc = [], []
    for seed in range(10):
        ds = gaussian_mixture(200, 4, seed=seed)
        perm = np.random.default_rng(seed).permutation(200)
        train, test = perm[:140], perm[140:]
        f = build_forest(select_rows(ds, train), ForestConfig(n_trees=100, seed=seed))
        t = build_tree(select_rows(ds, train), TreeConfig())
        forest_acc.append(np.mean(predict_forest_dataset(f, ds, test) == ds.labels[test]))
        tree_acc.append(np.mean(predict_dataset(t, ds, test) == ds.labels[test]))
    assert np.median(forest_acc) >= np.median(tree_acc)
