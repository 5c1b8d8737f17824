"""Decision-tree induction over a pluggable continuous splitter."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .data import MISSING_CODE, Dataset, RowView, Schema, SchemaMismatchError
from .splitters import (
    BinnedSplit,
    CategoricalSplit,
    Proposal,
    SplitRule,
    SplitterStrategy,
    StrategyKind,
    ThresholdSplit,
    binned_proposal,
    categorical_proposal,
    select_best,
    threshold_proposal,
)
from .stats import SplitPoints

TREE_FORMAT = "amsdtree.tree/1"


@dataclass(frozen=True)
class TreeConfig:
    strategy: SplitterStrategy = field(default_factory=SplitterStrategy.amsd)
    min_node_size: int = 2
    max_depth: int | None = None
    min_gain_ratio: float = 0.0

    def __post_init__(self):
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_gain_ratio < 0:
            raise ValueError("min_gain_ratio must be >= 0")

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.to_dict(),
            "min_node_size": self.min_node_size,
            "max_depth": self.max_depth,
            "min_gain_ratio": self.min_gain_ratio,
        }

    @classmethod
    def from_dict(cls, d) -> "TreeConfig":
        return cls(SplitterStrategy.from_dict(d["strategy"]), d["min_node_size"],
                   d["max_depth"], d["min_gain_ratio"])


@dataclass(eq=False)
class Leaf:
    distribution: tuple[int, ...]
    predicted: int


@dataclass(eq=False)
class Internal:
    rule: SplitRule
    children: list
    fallback: int
    child_counts: tuple[int, ...]
    distribution: tuple[int, ...]


TreeNode = Union[Leaf, Internal]


@dataclass(frozen=True)
class BuildStats:
    node_count: int
    leaf_count: int
    max_depth: int
    build_seconds: float = 0.0


@dataclass(eq=False)
class DecisionTree:
    root: TreeNode
    schema: Schema
    config: TreeConfig
    stats: BuildStats

    @property
    def fingerprint(self) -> str:
        return self.schema.fingerprint

    @property
    def n_classes(self) -> int:
        return self.schema.n_classes


@dataclass(frozen=True, eq=False)
class NodeEvent:
    """Passed to the ``trace`` hook of :func:`build_tree` for every internal node."""

    depth: int
    n_rows: int
    # attribute indices evaluated at this node (after subspace sampling)
    candidates: tuple[int, ...]
    chosen: Proposal
    proposals: tuple[Proposal, ...] = ()


class TreeBuildError(ValueError):
    pass


def _leaf(counts: np.ndarray) -> Leaf:
    # argmax returns the first maximum: ties go to the lowest class index
    return Leaf(tuple(int(c) for c in counts), int(np.argmax(counts)))


def build_tree(
    view: RowView,
    config: TreeConfig | None = None,
    *,
    attribute_sampler: Callable[[list[int]], Sequence[int]] | None = None,
    trace: Callable[[NodeEvent], None] | None = None,
) -> DecisionTree:
    """Grow a tree on ``view``.

    ``attribute_sampler`` receives the eligible attribute indices at each node
    and returns the subset to evaluate (the forest uses it for random
    subspaces). ``trace`` is called once per internal node.
    """
    config = config or TreeConfig()
    ds = view.dataset
    schema = ds.schema
    if len(view) == 0:
        raise TreeBuildError("cannot build a tree on an empty view")
    if schema.n_attributes == 0:
        raise TreeBuildError("schema has no predictor attributes")
    labels_all = ds.labels
    if (labels_all[view.indices] == MISSING_CODE).any():
        raise TreeBuildError("training rows with missing labels; apply a missing-value policy first")

    t0 = time.perf_counter()
    n_classes = schema.n_classes
    strategy = config.strategy
    kind = strategy.kind
    alpha = strategy.alpha if kind is StrategyKind.AMSD else None
    n_cats = [len(a.categories) for a in schema.attributes]
    continuous = [a.is_continuous for a in schema.attributes]
    columns = ds.columns

    def propose_at(j: int, idx: np.ndarray, y: np.ndarray) -> Proposal | None:
        if not continuous[j]:
            return categorical_proposal(columns[j][idx], y, n_classes, j, n_cats[j])
        if kind is StrategyKind.EXHAUSTIVE:
            return threshold_proposal(columns[j][idx], y, n_classes, j)
        return binned_proposal(columns[j], y, n_classes, j, alpha, strategy.gamma_max, idx=idx)

    node_count = leaf_count = max_depth = 0
    root_holder: list = [None]
    # (indices, depth, used categoricals, parent children list, slot)
    stack = [(np.asarray(view.indices, dtype=np.intp), 0, frozenset(), root_holder, 0)]
    while stack:
        idx, depth, used, parent, slot = stack.pop()
        y = labels_all[idx]
        counts = np.bincount(y, minlength=n_classes)
        node_count += 1
        max_depth = max(max_depth, depth)

        chosen = None
        candidates: tuple[int, ...] = ()
        proposals: list = []
        if (np.count_nonzero(counts) > 1 and idx.shape[0] >= config.min_node_size
                and (config.max_depth is None or depth < config.max_depth)):
            eligible = [j for j in range(schema.n_attributes) if j not in used]
            if eligible and attribute_sampler is not None:
                eligible = sorted(attribute_sampler(eligible))
            candidates = tuple(eligible)
            proposals = [p for p in (propose_at(j, idx, y) for j in eligible) if p is not None]
            chosen = select_best(proposals)
            if chosen is not None and chosen.score.gain_ratio < config.min_gain_ratio:
                chosen = None

        if chosen is None:
            parent[slot] = _leaf(counts)
            leaf_count += 1
            continue

        rule = chosen.rule
        sizes = chosen.score.child_counts
        fallback = int(np.argmax(sizes))
        children: list = [None] * rule.arity
        node = Internal(rule, children, fallback, tuple(sizes), tuple(int(c) for c in counts))
        parent[slot] = node
        if trace is not None:
            trace(NodeEvent(depth, int(idx.shape[0]), candidates, chosen, tuple(proposals)))
        child_used = used | {rule.attribute} if isinstance(rule, CategoricalSplit) else used
        assignment = chosen.assignment
        parent_leaf = _leaf(counts)
        # push in reverse so children are expanded in index order
        for c in range(rule.arity - 1, -1, -1):
            if sizes[c] == 0:
                children[c] = Leaf(parent_leaf.distribution, parent_leaf.predicted)
                node_count += 1
                leaf_count += 1
                max_depth = max(max_depth, depth + 1)
                continue
            stack.append((idx[assignment == c], depth + 1, child_used, children, c))

    stats = BuildStats(node_count, leaf_count, max_depth, time.perf_counter() - t0)
    return DecisionTree(root_holder[0], schema, config, stats)


def _walk(node: TreeNode, row: Sequence) -> Leaf:
    while isinstance(node, Internal):
        child = node.rule.child_for(row[node.rule.attribute])
        node = node.children[node.fallback if child is None else child]
    return node


def predict(tree: DecisionTree, row: Sequence) -> int:
    """Class index for one row of attribute values (NaN / -1 for missing)."""
    if len(row) != tree.schema.n_attributes:
        raise SchemaMismatchError(
            f"row has {len(row)} values, the tree expects {tree.schema.n_attributes}")
    return _walk(tree.root, row).predicted


def predict_dataset(tree: DecisionTree, ds: Dataset, indices=None) -> np.ndarray:
    """Predicted class for each row of ``ds`` (or the given rows), routed in bulk."""
    check_schema(tree.schema, ds.schema)
    idx = np.arange(ds.row_count, dtype=np.intp) if indices is None else np.asarray(indices, dtype=np.intp)
    out = np.empty(idx.shape[0], dtype=np.int64)
    stack = [(tree.root, np.arange(idx.shape[0], dtype=np.intp))]
    while stack:
        node, pos = stack.pop()
        if pos.size == 0:
            continue
        if isinstance(node, Leaf):
            out[pos] = node.predicted
            continue
        child = node.rule.route_array(ds.columns[node.rule.attribute][idx[pos]])
        child[child < 0] = node.fallback
        for c, sub in enumerate(node.children):
            stack.append((sub, pos[child == c]))
    return out


def check_schema(expected: Schema, actual: Schema) -> None:
    if expected.fingerprint != actual.fingerprint:
        name = expected.diff(actual) or "<schema>"
        raise SchemaMismatchError(f"schema mismatch at attribute {name!r}", name)


def tree_metrics(tree_or_node) -> dict:
    """Exact leaf count, node count and depth by traversal."""
    root = tree_or_node.root if isinstance(tree_or_node, DecisionTree) else tree_or_node
    leaves = nodes = depth = 0
    stack = [(root, 0)]
    while stack:
        node, d = stack.pop()
        nodes += 1
        depth = max(depth, d)
        if isinstance(node, Leaf):
            leaves += 1
        else:
            stack.extend((c, d + 1) for c in node.children)
    return {"leaf_count": leaves, "node_count": nodes, "max_depth": depth}


# -- serialization ----------------------------------------------------------

class TreeFormatError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} (at position {position})")
        self.position = position


def _rule_to_dict(rule: SplitRule) -> dict:
    if isinstance(rule, BinnedSplit):
        return {"type": "binned", "attribute": rule.attribute, "points": list(rule.points.as_tuple())}
    if isinstance(rule, ThresholdSplit):
        return {"type": "threshold", "attribute": rule.attribute, "threshold": rule.threshold}
    return {"type": "categorical", "attribute": rule.attribute, "n_categories": rule.n_categories}


def _rule_from_dict(d) -> SplitRule:
    t = d["type"]
    if t == "binned":
        s1, s2, s3 = (float(v) for v in d["points"])
        return BinnedSplit(int(d["attribute"]), SplitPoints(s1, s2, s3))
    if t == "threshold":
        return ThresholdSplit(int(d["attribute"]), float(d["threshold"]))
    if t == "categorical":
        return CategoricalSplit(int(d["attribute"]), int(d["n_categories"]))
    raise TreeFormatError(f"unknown split type {t!r}")


def node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": {"distribution": list(node.distribution), "predicted": node.predicted}}
    return {
        "split": _rule_to_dict(node.rule),
        "fallback": node.fallback,
        "child_counts": list(node.child_counts),
        "distribution": list(node.distribution),
        "children": [node_to_dict(c) for c in node.children],
    }


def node_from_dict(d) -> TreeNode:
    if "leaf" in d:
        leaf = d["leaf"]
        dist = tuple(int(c) for c in leaf["distribution"])
        predicted = int(leaf.get("predicted", int(np.argmax(dist)) if dist else 0))
        return Leaf(dist, predicted)
    rule = _rule_from_dict(d["split"])
    children = [node_from_dict(c) for c in d["children"]]
    if len(children) != rule.arity:
        raise TreeFormatError(f"split has arity {rule.arity} but {len(children)} children")
    return Internal(rule, children, int(d["fallback"]), tuple(d.get("child_counts", ())),
                    tuple(d.get("distribution", ())))


def tree_to_dict(tree: DecisionTree) -> dict:
    # wall time is left out so identical builds serialize to identical bytes
    s = tree.stats
    return {
        "format": TREE_FORMAT,
        "schema": tree.schema.to_dict(),
        "fingerprint": tree.fingerprint,
        "config": tree.config.to_dict(),
        "stats": {"node_count": s.node_count, "leaf_count": s.leaf_count, "max_depth": s.max_depth},
        "root": node_to_dict(tree.root),
    }


def tree_from_dict(d) -> DecisionTree:
    if d.get("format") != TREE_FORMAT:
        raise TreeFormatError(f"not a tree document (format {d.get('format')!r})")
    try:
        schema = Schema.from_dict(d["schema"])
        if d.get("fingerprint", schema.fingerprint) != schema.fingerprint:
            raise TreeFormatError("fingerprint does not match the embedded schema")
        root = node_from_dict(d["root"])
        config = TreeConfig.from_dict(d["config"]) if "config" in d else TreeConfig()
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, TreeFormatError):
            raise
        raise TreeFormatError(f"malformed tree document: {exc!r}") from exc
    m = tree_metrics(root)
    return DecisionTree(root, schema, config, BuildStats(m["node_count"], m["leaf_count"], m["max_depth"]))


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def loads(text: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeFormatError(f"cannot parse model document: {exc.msg}", exc.pos) from exc


def serialize_tree(tree: DecisionTree) -> str:
    return dumps(tree_to_dict(tree))


def deserialize_tree(text: str) -> DecisionTree:
    return tree_from_dict(loads(text))
