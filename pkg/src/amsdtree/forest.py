"""Bagged ensembles of statistically-split trees with random attribute subspaces."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, RowView, Schema, all_rows
from .splitters import SplitterStrategy
from .tree import (
    BuildStats,
    DecisionTree,
    TreeConfig,
    build_tree,
    check_schema,
    dumps,
    loads,
    node_from_dict,
    node_to_dict,
    predict_dataset,
    tree_metrics,
    TreeFormatError,
    _walk,
)

FOREST_FORMAT = "amsdtree.forest/1"


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    # None selects floor(sqrt(number of predictors)), at least 1
    mtry: int | None = None
    seed: int = 0
    tree_config: TreeConfig = field(default_factory=lambda: TreeConfig(SplitterStrategy.amsd()))
    # None means one draw per training row
    bootstrap_size: int | None = None
    # False trains every tree on the full view in order (used by tests)
    bootstrap: bool = True
    # None uses os.cpu_count(); never affects the result
    workers: int | None = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.bootstrap_size is not None and self.bootstrap_size < 1:
            raise ValueError("bootstrap_size must be >= 1")

    def resolved_mtry(self, n_predictors: int) -> int:
        if self.mtry is None:
            return max(1, math.isqrt(n_predictors))
        if self.mtry > n_predictors:
            raise ValueError(f"mtry={self.mtry} exceeds the {n_predictors} predictors")
        return self.mtry

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "mtry": self.mtry,
            "seed": self.seed,
            "tree_config": self.tree_config.to_dict(),
            "bootstrap_size": self.bootstrap_size,
            "bootstrap": self.bootstrap,
        }

    @classmethod
    def from_dict(cls, d) -> "ForestConfig":
        return cls(d["n_trees"], d["mtry"], d["seed"], TreeConfig.from_dict(d["tree_config"]),
                   d["bootstrap_size"], d.get("bootstrap", True))


@dataclass(eq=False)
class Forest:
    trees: list[DecisionTree]
    schema: Schema
    config: ForestConfig
    # (master seed, tree index) per tree: the inputs of tree_rng
    seed_records: list[tuple[int, int]]
    # in-memory only; not serialized
    bootstrap_indices: list[np.ndarray] = field(default_factory=list)

    @property
    def fingerprint(self) -> str:
        return self.schema.fingerprint


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Independent stream for one tree: the tree index is mixed into the
    master seed through ``SeedSequence``'s spawn key, so stream t does not
    depend on how many other trees exist or in which order they are built."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tree_index,)))


def _build_one(view: RowView, config: ForestConfig, mtry: int, t: int, trace=None):
    rng = tree_rng(config.seed, t)
    n = len(view)
    if config.bootstrap:
        size = config.bootstrap_size or n
        sample = view.indices[rng.integers(0, n, size=size)]
    else:
        sample = view.indices.copy()

    def sampler(eligible):
        if len(eligible) <= mtry:
            return eligible
        return rng.choice(eligible, size=mtry, replace=False).tolist()

    tree = build_tree(RowView(view.dataset, sample), config.tree_config,
                      attribute_sampler=sampler, trace=trace)
    return tree, sample


def build_forest(data: Dataset | RowView, config: ForestConfig | None = None, *, trace_factory=None) -> Forest:
    """Build ``config.n_trees`` trees on bootstrap samples of ``data``.

    ``trace_factory(t)`` may return a per-tree ``trace`` hook for
    :func:`build_tree` (instrumentation only).
    """
    config = config or ForestConfig()
    view = all_rows(data) if isinstance(data, Dataset) else data
    if len(view) == 0:
        raise ValueError("cannot build a forest on an empty dataset")
    mtry = config.resolved_mtry(view.dataset.schema.n_attributes)

    def job(t):
        trace = trace_factory(t) if trace_factory is not None else None
        return _build_one(view, config, mtry, t, trace)

    workers = config.workers or os.cpu_count() or 1
    if workers == 1 or config.n_trees == 1:
        results = [job(t) for t in range(config.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # map preserves tree order regardless of completion order
            results = list(pool.map(job, range(config.n_trees)))
    return Forest(
        trees=[r[0] for r in results],
        schema=view.dataset.schema,
        config=config,
        seed_records=[(config.seed, t) for t in range(config.n_trees)],
        bootstrap_indices=[r[1] for r in results],
    )


def predict_forest_proba(forest: Forest, row) -> np.ndarray:
    votes = np.zeros(forest.schema.n_classes)
    for tree in forest.trees:
        votes[_walk(tree.root, row).predicted] += 1
    return votes / len(forest.trees)


def predict_forest(forest: Forest, row) -> int:
    """Majority vote; ties go to the lowest class index."""
    return int(np.argmax(predict_forest_proba(forest, row)))


def vote_counts(forest: Forest, ds: Dataset, indices=None) -> np.ndarray:
    check_schema(forest.schema, ds.schema)
    n = ds.row_count if indices is None else len(indices)
    k = forest.schema.n_classes
    votes = np.zeros((n, k), dtype=np.int64)
    rows = np.arange(n)
    for tree in forest.trees:
        votes[rows, predict_dataset(tree, ds, indices)] += 1
    return votes


def predict_forest_dataset(forest: Forest, ds: Dataset, indices=None) -> np.ndarray:
    return np.argmax(vote_counts(forest, ds, indices), axis=1)


def mean_leaf_count(forest: Forest) -> float:
    return float(np.mean([t.stats.leaf_count for t in forest.trees]))


# -- serialization ----------------------------------------------------------

def forest_to_dict(forest: Forest) -> dict:
    return {
        "format": FOREST_FORMAT,
        "schema": forest.schema.to_dict(),
        "fingerprint": forest.fingerprint,
        "config": forest.config.to_dict(),
        "seed_records": [list(r) for r in forest.seed_records],
        "trees": [
            {
                "stats": {"node_count": t.stats.node_count, "leaf_count": t.stats.leaf_count,
                          "max_depth": t.stats.max_depth},
                "root": node_to_dict(t.root),
            }
            for t in forest.trees
        ],
    }


def forest_from_dict(d) -> Forest:
    if d.get("format") != FOREST_FORMAT:
        raise TreeFormatError(f"not a forest document (format {d.get('format')!r})")
    try:
        schema = Schema.from_dict(d["schema"])
        config = ForestConfig.from_dict(d["config"])
        trees = []
        for td in d["trees"]:
            root = node_from_dict(td["root"])
            m = tree_metrics(root)
            trees.append(DecisionTree(root, schema, config.tree_config,
                                      BuildStats(m["node_count"], m["leaf_count"], m["max_depth"])))
        records = [tuple(r) for r in d["seed_records"]]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, TreeFormatError):
            raise
        raise TreeFormatError(f"malformed forest document: {exc!r}") from exc
    if not trees:
        raise TreeFormatError("forest document has no trees")
    return Forest(trees, schema, config, records)


def serialize_forest(forest: Forest) -> str:
    return dumps(forest_to_dict(forest))


def deserialize_forest(text: str) -> Forest:
    return forest_from_dict(loads(text))
