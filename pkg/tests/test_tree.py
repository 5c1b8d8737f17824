import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amsdtree.data import Attribute, AttributeKind, Dataset, Schema, SchemaMismatchError, all_rows, select_rows
from amsdtree.splitters import BinnedSplit, CategoricalSplit, SplitterStrategy
from amsdtree.stats import SplitPoints
from amsdtree.tree import (
    Internal,
    Leaf,
    TreeBuildError,
    TreeConfig,
    TreeFormatError,
    build_tree,
    deserialize_tree,
    node_to_dict,
    predict,
    predict_dataset,
    serialize_tree,
    tree_metrics,
)
from oracles import two_pass_moments

AMSD = TreeConfig(SplitterStrategy.amsd())
MSD = TreeConfig(SplitterStrategy.msd())
C45 = TreeConfig(SplitterStrategy.exhaustive())


def eight_rows():
    x = np.array([1, 2, 3, 4, 5, 6, 7, 100], dtype=float)
    y = np.array([0, 0, 0, 1, 1, 1, 1, 1])
    return Dataset.from_arrays(x.reshape(-1, 1), y, class_labels=["A", "B"])


def test_pure_view_is_single_leaf():
    ds = Dataset.from_arrays(np.arange(5.0).reshape(-1, 1), [1] * 5, class_labels=["A", "B"])
    t = build_tree(all_rows(ds), AMSD)
    assert isinstance(t.root, Leaf) and t.root.predicted == 1
    assert tree_metrics(t) == {"leaf_count": 1, "node_count": 1, "max_depth": 0}


def test_categorical_split_with_two_pure_leaves():
    schema = Schema((Attribute("c", AttributeKind.CATEGORICAL, ("p", "q")),), "y", ("A", "B"))
    ds = Dataset(schema, (np.array([0, 1, 0, 1]),), np.array([0, 1, 0, 1]))
    t = build_tree(all_rows(ds), AMSD)
    assert isinstance(t.root, Internal) and isinstance(t.root.rule, CategoricalSplit)
    assert [c.predicted for c in t.root.children] == [0, 1]
    assert t.stats.leaf_count == 2


@pytest.mark.parametrize("config", [MSD, AMSD], ids=["msd", "amsd"])
def test_eight_row_hand_trace(config):
    ds = eight_rows()
    t = build_tree(all_rows(ds), config)
    mu, sd, skew = two_pass_moments(ds.columns[0])
    assert (mu, skew) == pytest.approx((16.0, 2.2521), abs=1e-4)  # skew above the clip
    root = t.root
    if config is MSD:
        expected = (mu - sd, mu, mu + sd)
    else:
        expected = (mu - 0.5 * sd, mu, mu + 1.5 * sd)
    assert root.rule.points.as_tuple() == pytest.approx(expected, rel=1e-12)
    # 1..7 land in bin 1 and 100 in bin 3 under both rules
    assert root.child_counts == (0, 7, 0, 1)
    empty0, inner, empty2, right = root.children
    for e in (empty0, empty2):
        assert isinstance(e, Leaf) and e.distribution == (3, 5) and e.predicted == 1
    assert isinstance(right, Leaf) and right.distribution == (0, 1)
    # child {1..7}: mean 4, sd 2, zero skew, so points (2, 4, 6) for both rules
    assert inner.rule.points.as_tuple() == pytest.approx((2.0, 4.0, 6.0), rel=1e-12)
    assert inner.child_counts == (1, 2, 2, 2)
    assert [c.distribution for c in inner.children] == [(1, 0), (2, 0), (0, 2), (0, 2)]
    assert tree_metrics(t) == {"leaf_count": 7, "node_count": 9, "max_depth": 2}


def test_msd_and_amsd_roots_differ_on_eight_rows():
    ds = eight_rows()
    a = build_tree(all_rows(ds), AMSD).root.rule.points
    m = build_tree(all_rows(ds), MSD).root.rule.points
    assert a != m and a.s2 == m.s2


def test_single_leaf_predicts_always():
    ds = Dataset.from_arrays(np.arange(6.0).reshape(-1, 1), [0, 1, 0, 1, 0, 1])
    t = build_tree(all_rows(ds), TreeConfig(max_depth=0))
    assert isinstance(t.root, Leaf)
    assert {predict(t, [v]) for v in (-5.0, 0.0, 100.0, math.nan)} == {0}


@pytest.mark.parametrize("config", [C45, MSD, AMSD], ids=["c45", "msd", "amsd"])
def test_separable_training_accuracy(config, toy):
    t = build_tree(all_rows(toy), config)
    assert np.array_equal(predict_dataset(t, toy), toy.labels)


def test_missing_value_follows_fallback():
    ds = eight_rows()
    t = build_tree(all_rows(ds), MSD)
    root = t.root
    assert root.fallback == 1  # the largest child
    inner = root.children[1]
    expected = inner.children[inner.fallback].predicted
    assert predict(t, [math.nan]) == expected
    nan_ds = Dataset.from_arrays(np.array([[math.nan]]), [0], class_labels=["A", "B"])
    assert predict_dataset(t, nan_ds).tolist() == [expected]


def test_unseen_category_follows_fallback():
    schema = Schema((Attribute("c", AttributeKind.CATEGORICAL, ("p", "q", "r")),), "y", ("A", "B"))
    ds = Dataset(schema, (np.array([0, 0, 0, 1]),), np.array([0, 0, 0, 1]))
    t = build_tree(all_rows(ds), AMSD)
    assert t.root.fallback == 0
    assert predict(t, [2]) == 0 and predict(t, [-1]) == 0


def test_training_drops_rows_missing_split_attribute(rng):
    x = rng.normal(size=(200, 2))
    x[rng.random(200) < 0.2, 0] = np.nan
    y = (np.nan_to_num(x[:, 0]) + x[:, 1] > 0).astype(int)
    ds = Dataset.from_arrays(x, y)
    events = []
    build_tree(all_rows(ds), AMSD, trace=events.append)
    col = ds.columns
    for ev in events:
        assert sum(ev.chosen.score.child_counts) <= ev.n_rows
    root = events[0]
    missing = int(np.isnan(col[root.chosen.rule.attribute]).sum())
    assert sum(root.chosen.score.child_counts) == root.n_rows - missing


def test_metric_identities(rng):
    x = rng.normal(size=(300, 3))
    y = rng.integers(0, 3, 300)
    t = build_tree(all_rows(Dataset.from_arrays(x, y)), AMSD)
    m = tree_metrics(t)
    internal = 0
    stack = [t.root]
    while stack:
        n = stack.pop()
        if isinstance(n, Internal):
            internal += 1
            if isinstance(n.rule, BinnedSplit):
                assert len(n.children) == 4
            stack.extend(n.children)
    assert m["leaf_count"] <= m["node_count"] == internal + m["leaf_count"]
    assert (m["leaf_count"], m["node_count"], m["max_depth"]) == (
        t.stats.leaf_count, t.stats.node_count, t.stats.max_depth)


def test_root_with_four_leaves_metrics():
    leaf = Leaf((1, 0), 0)
    root = Internal(BinnedSplit(0, SplitPoints(1, 2, 3)), [leaf, leaf, leaf, leaf], 0, (1, 1, 1, 1), (4, 0))
    assert tree_metrics(root) == {"leaf_count": 4, "node_count": 5, "max_depth": 1}


def test_determinism(rng):
    ds = Dataset.from_arrays(rng.normal(size=(200, 3)), rng.integers(0, 2, 200))
    a = build_tree(all_rows(ds), AMSD)
    b = build_tree(all_rows(ds), AMSD)
    assert serialize_tree(a) == serialize_tree(b)


def test_children_never_exceed_parent(rng):
    ds = Dataset.from_arrays(rng.lognormal(size=(150, 2)), rng.integers(0, 2, 150))
    for ev in _events(ds, MSD):
        assert all(c <= ev.n_rows for c in ev.chosen.score.child_counts)


def _events(ds, config):
    out = []
    build_tree(all_rows(ds), config, trace=out.append)
    return out


def test_stopping_rules(rng):
    ds = Dataset.from_arrays(rng.normal(size=(100, 2)), rng.integers(0, 2, 100))
    assert build_tree(all_rows(ds), TreeConfig(max_depth=1)).stats.max_depth <= 1
    big = build_tree(all_rows(ds), TreeConfig(min_node_size=60))
    assert big.stats.max_depth <= 1
    assert build_tree(all_rows(ds), TreeConfig(min_gain_ratio=10.0)).stats.leaf_count == 1


def test_categorical_consumed_continuous_reused(toy):
    events = _events(toy, C45)
    # walk root-to-leaf paths: a categorical attribute appears at most once per path
    t = build_tree(all_rows(toy), C45)

    def walk(node, used):
        if isinstance(node, Leaf):
            return
        if isinstance(node.rule, CategoricalSplit):
            assert node.rule.attribute not in used
            used = used | {node.rule.attribute}
        for c in node.children:
            walk(c, used)

    walk(t.root, frozenset())
    attrs = [ev.chosen.rule.attribute for ev in events]
    assert attrs.count(0) > 1  # the continuous reading is split on repeatedly


def test_build_errors(toy):
    with pytest.raises(TreeBuildError):
        build_tree(select_rows(toy, []), AMSD)
    schema = Schema((), "y", ("A",))
    empty = Dataset(schema, (), np.array([0, 0]))
    with pytest.raises(TreeBuildError):
        build_tree(all_rows(empty), AMSD)
    with pytest.raises(ValueError):
        TreeConfig(min_node_size=0)


# -- serialization ---------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["exhaustive", "msd", "amsd"]))
def test_round_trip_predictions(seed, name):
    rng = np.random.default_rng(seed)
    ds = Dataset.from_arrays(rng.lognormal(size=(120, 3)), rng.integers(0, 3, 120))
    t = build_tree(all_rows(ds), TreeConfig(SplitterStrategy.parse(name)))
    back = deserialize_tree(serialize_tree(t))
    probe = rng.lognormal(size=(1000, 3))
    probe[rng.random((1000, 3)) < 0.05] = np.nan
    pds = Dataset.from_arrays(probe, np.zeros(1000, dtype=int), class_labels=ds.schema.class_labels)
    assert np.array_equal(predict_dataset(t, pds), predict_dataset(back, pds))
    assert [predict(t, r) for r in probe[:50]] == [predict(back, r) for r in probe[:50]]
    assert serialize_tree(back) == serialize_tree(t)


def test_round_trip_mixed_schema(toy):
    t = build_tree(all_rows(toy), AMSD)
    back = deserialize_tree(serialize_tree(t))
    assert node_to_dict(back.root) == node_to_dict(t.root)
    assert back.schema == toy.schema and back.config == t.config


def test_truncated_document_reports_position(toy):
    text = serialize_tree(build_tree(all_rows(toy), AMSD))
    with pytest.raises(TreeFormatError) as exc:
        deserialize_tree(text[:100])
    assert exc.value.position is not None and "position" in str(exc.value)


def test_hand_written_single_leaf():
    doc = {
        "format": "amsdtree.tree/1",
        "schema": {"attributes": [{"name": "x", "kind": "continuous"}], "class_attribute": "y",
                   "class_labels": ["no", "yes"]},
        "root": {"leaf": {"distribution": [0, 3]}},
    }
    t = deserialize_tree(json.dumps(doc))
    assert predict(t, [1.0]) == 1
    assert t.schema.class_labels[predict(t, [math.nan])] == "yes"


def test_malformed_documents():
    with pytest.raises(TreeFormatError):
        deserialize_tree('{"format": "something-else"}')
    with pytest.raises(TreeFormatError):
        deserialize_tree('{"format": "amsdtree.tree/1", "schema": {}}')


def test_schema_mismatch_names_attribute(toy):
    t = build_tree(all_rows(toy), AMSD)
    other = Dataset.from_arrays(np.zeros((2, 3)), [0, 1], attribute_names=["reading", "height", "colour"],
                                class_labels=["high", "low"])
    with pytest.raises(SchemaMismatchError) as exc:
        predict_dataset(t, other)
    assert exc.value.attribute == "width"
    with pytest.raises(SchemaMismatchError):
        predict(t, [1.0])
