"""Stratified cross-validation, the model comparison protocol, and timing experiments."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import statistics
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .data import (
    MISSING_CODE,
    Dataset,
    DatasetManifest,
    MissingPolicy,
    RowView,
    all_rows,
    load_dataset,
)
from .forest import Forest, ForestConfig, build_forest, mean_leaf_count, predict_forest_dataset
from .splitters import (
    SplitterStrategy,
    StrategyKind,
    binned_proposal,
    categorical_proposal,
    select_best,
    threshold_proposal,
)
from .tree import DecisionTree, NodeEvent, TreeConfig, build_tree, predict_dataset

REPORT_FORMAT = "amsdtree.report/1"
SCALING_FORMAT = "amsdtree.scaling/1"


# -- folds ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    seed: int
    folds: tuple[np.ndarray, ...]

    def train_test(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        test = self.folds[i]
        train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
        return train, test


def make_folds(labels, k: int = 10, seed: int = 0) -> FoldPlan:
    """Stratified folds: each class is shuffled, then dealt round-robin.

    The dealing position carries over from one class to the next, so fold
    sizes differ by at most one as well.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} rows")
    if (labels == MISSING_CODE).any():
        raise ValueError("labels contain missing values")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        rng.shuffle(rows)
        for r in rows:
            buckets[pos].append(int(r))
            pos = (pos + 1) % k
    return FoldPlan(k, seed, tuple(np.array(sorted(b), dtype=np.intp) for b in buckets))


# -- models -----------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    name: str
    config: Union[TreeConfig, ForestConfig]

    @property
    def is_forest(self) -> bool:
        return isinstance(self.config, ForestConfig)

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": "forest" if self.is_forest else "tree",
                "config": self.config.to_dict()}


def default_models(n_trees: int = 100, seed: int = 0, alpha: float = 0.25, gamma_max: float = 2.0,
                   mtry: int | None = None, workers: int | None = None) -> list[ModelSpec]:
    """The four-way comparison: exhaustive C4.5, MSD, AMSD, and a forest of AMSD trees."""
    amsd = TreeConfig(SplitterStrategy.amsd(alpha, gamma_max))
    return [
        ModelSpec("c45", TreeConfig(SplitterStrategy.exhaustive())),
        ModelSpec("msd", TreeConfig(SplitterStrategy.msd())),
        ModelSpec("amsd", amsd),
        ModelSpec("rf-amsd", ForestConfig(n_trees=n_trees, mtry=mtry, seed=seed, tree_config=amsd,
                                          workers=workers)),
    ]


def train(model: ModelSpec, view: RowView, trace=None) -> DecisionTree | Forest:
    if model.is_forest:
        factory = (lambda t: trace) if trace is not None else None
        return build_forest(view, model.config, trace_factory=factory)
    return build_tree(view, model.config, trace=trace)


def predict_rows(fitted, ds: Dataset, indices) -> np.ndarray:
    if isinstance(fitted, Forest):
        return predict_forest_dataset(fitted, ds, indices)
    return predict_dataset(fitted, ds, indices)


def leaf_metric(fitted) -> float:
    if isinstance(fitted, Forest):
        return mean_leaf_count(fitted)
    return float(fitted.stats.leaf_count)


@dataclass(frozen=True)
class FoldResult:
    fold: int
    accuracy: float
    train_seconds: float
    leaf_metric: float
    n_test: int


def run_cv(ds: Dataset, model: ModelSpec, plan: FoldPlan, *,
           clock: Callable[[], float] = time.perf_counter, trace=None) -> list[FoldResult]:
    """Train on all folds but one, score plain accuracy on the held-out fold.

    Only the induction call sits between the two ``clock`` readings.
    """
    if sum(len(f) for f in plan.folds) != ds.row_count:
        raise ValueError("fold plan does not cover this dataset")
    out = []
    for i in range(plan.k):
        train_idx, test_idx = plan.train_test(i)
        view = RowView(ds, train_idx)
        t0 = clock()
        fitted = train(model, view, trace)
        t1 = clock()
        pred = predict_rows(fitted, ds, test_idx)
        acc = float(np.count_nonzero(pred == ds.labels[test_idx])) / len(test_idx)
        out.append(FoldResult(i, acc, t1 - t0, leaf_metric(fitted), int(len(test_idx))))
    return out


# -- reports ----------------------------------------------------------------

@dataclass(frozen=True)
class SummaryRecord:
    dataset: str
    model: str
    accuracy_mean: float
    accuracy_std: float
    leaf_mean: float
    train_seconds: float
    folds: tuple[FoldResult, ...]


def summarize(dataset: str, model: str, folds: Sequence[FoldResult]) -> SummaryRecord:
    accs = [f.accuracy for f in folds]
    return SummaryRecord(
        dataset=dataset,
        model=model,
        accuracy_mean=math.fsum(accs) / len(accs),
        # sample standard deviation over folds
        accuracy_std=statistics.stdev(accs) if len(accs) > 1 else 0.0,
        leaf_mean=math.fsum(f.leaf_metric for f in folds) / len(folds),
        train_seconds=math.fsum(f.train_seconds for f in folds),
        folds=tuple(folds),
    )


def environment_record(seed: int) -> dict:
    return {
        "hardware": f"{platform.machine()} {platform.processor() or ''} cpus={os.cpu_count()}".strip(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": seed,
    }


@dataclass
class EvalReport:
    records: list[SummaryRecord]
    k: int
    seed: int
    models: list[dict] = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def record(self, dataset: str, model: str) -> SummaryRecord:
        for r in self.records:
            if r.dataset == dataset and r.model == model:
                return r
        raise KeyError((dataset, model))

    def to_dict(self) -> dict:
        """Seed-deterministic fields at top level; wall times only under ``timing`` keys."""
        return {
            "format": REPORT_FORMAT,
            "k": self.k,
            "seed": self.seed,
            "models": self.models,
            "config": self.extra,
            "summary": [
                {"dataset": r.dataset, "model": r.model, "accuracy_mean": r.accuracy_mean,
                 "accuracy_std": r.accuracy_std, "leaf_mean": r.leaf_mean, "folds": len(r.folds),
                 "timing": {"train_seconds": r.train_seconds}}
                for r in self.records
            ],
            "folds": [
                {"dataset": r.dataset, "model": r.model, "fold": f.fold, "accuracy": f.accuracy,
                 "leaf_metric": f.leaf_metric, "n_test": f.n_test,
                 "timing": {"train_seconds": f.train_seconds}}
                for r in self.records for f in r.folds
            ],
            "environment": self.environment,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    TABLE_COLUMNS = ("dataset", "model", "accuracy_mean", "accuracy_std", "leaf_mean", "folds",
                     "train_seconds")

    def to_table(self, delimiter: str = "\t") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        w.writerow(self.TABLE_COLUMNS)
        for r in self.records:
            w.writerow([r.dataset, r.model, repr(r.accuracy_mean), repr(r.accuracy_std),
                        repr(r.leaf_mean), len(r.folds), repr(r.train_seconds)])
        return buf.getvalue()

    def plot_tables(self, delimiter: str = "\t") -> dict[str, str]:
        """One long-format table per figure: accuracy, time (raw seconds), leaf count."""
        specs = {
            "accuracy_by_model": ("accuracy_mean", lambda r: r.accuracy_mean),
            "time_by_model": ("train_seconds", lambda r: r.train_seconds),
            "leaves_by_model": ("leaf_mean", lambda r: r.leaf_mean),
        }
        out = {}
        for name, (col, get) in specs.items():
            buf = io.StringIO()
            w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
            w.writerow(["dataset", "model", col])
            for r in self.records:
                w.writerow([r.dataset, r.model, repr(get(r))])
            out[name] = buf.getvalue()
        return out


DatasetSource = Union[Dataset, DatasetManifest]


def _materialize(source: DatasetSource, policy: MissingPolicy | None) -> Dataset:
    if isinstance(source, Dataset):
        return source
    if not os.path.exists(source.path):
        raise FileNotFoundError(f"dataset {source.name!r}: missing file {source.path}")
    return load_dataset(source, policy)


def run_benchmark(datasets: Iterable[DatasetSource], models: Sequence[ModelSpec], k: int = 10,
                  seed: int = 0, *, policy: MissingPolicy | None = MissingPolicy.IMPUTE_MEAN_MODE,
                  progress: Callable[[str], None] | None = None) -> EvalReport:
    """Every dataset crossed with every model, all under one fold plan per dataset."""
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ValueError(f"model names must be unique: {names}")
    sources = list(datasets)
    # fail on any missing file before spending time on training
    for s in sources:
        if isinstance(s, DatasetManifest) and not os.path.exists(s.path):
            raise FileNotFoundError(f"dataset {s.name!r}: missing file {s.path}")
    records = []
    for source in sources:
        ds = _materialize(source, policy)
        plan = make_folds(ds.labels, k, seed)
        for model in models:
            if progress:
                progress(f"{ds.name}: {model.name}")
            records.append(summarize(ds.name, model.name, run_cv(ds, model, plan)))
    return EvalReport(records, k, seed, [m.to_dict() for m in models], environment_record(seed))


# -- gamma_max ablation -----------------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    gamma_max: float
    accuracy_mean: float
    accuracy_std: float
    binned_nodes: int
    empty_tail_nodes: int

    @property
    def empty_tail_fraction(self) -> float:
        return self.empty_tail_nodes / self.binned_nodes if self.binned_nodes else 0.0


def tail_bin_empty(event: NodeEvent) -> bool | None:
    """Whether the outer bin on the skewed side of a binned split got no training rows.

    Returns None for non-binned splits. Zero skew counts the upper bin.
    """
    p = event.chosen
    if p.moments is None:
        return None
    tail = 0 if p.moments.skewness < 0 else 3
    return p.score.child_counts[tail] == 0


def run_gamma_ablation(ds: Dataset, gamma_values: Sequence[float], k: int = 10, seed: int = 0,
                       alpha: float = 0.25, tree_config: TreeConfig | None = None) -> list[AblationRow]:
    """Cross-validated AMSD accuracy and empty tail-bin frequency for each clip value."""
    base = tree_config or TreeConfig()
    plan = make_folds(ds.labels, k, seed)
    rows = []
    for g in gamma_values:
        if g < 0:
            raise ValueError("gamma_max values must be non-negative")
        counter = {"binned": 0, "empty": 0}

        def trace(ev, counter=counter):
            empty = tail_bin_empty(ev)
            if empty is not None:
                counter["binned"] += 1
                counter["empty"] += int(empty)

        cfg = TreeConfig(SplitterStrategy.amsd(alpha, g), base.min_node_size, base.max_depth,
                         base.min_gain_ratio)
        s = summarize(ds.name, f"amsd[gamma_max={g}]", run_cv(ds, ModelSpec("amsd", cfg), plan, trace=trace))
        rows.append(AblationRow(g, s.accuracy_mean, s.accuracy_std, counter["binned"], counter["empty"]))
    return rows


# -- split-search scaling ---------------------------------------------------

def root_split_search(ds: Dataset, strategy: SplitterStrategy):
    """One root-node candidate proposal per attribute plus selection (no recursion)."""
    # the root holds every row, so columns are used in place without a gather
    y = ds.labels
    k = ds.schema.n_classes
    alpha = strategy.alpha if strategy.kind is StrategyKind.AMSD else None
    proposals = []
    for j, attr in enumerate(ds.schema.attributes):
        col = ds.columns[j]
        if not attr.is_continuous:
            p = categorical_proposal(col, y, k, j, len(attr.categories))
        elif strategy.kind is StrategyKind.EXHAUSTIVE:
            p = threshold_proposal(col, y, k, j)
        else:
            p = binned_proposal(col, y, k, j, alpha, strategy.gamma_max)
        if p is not None:
            proposals.append(p)
    return select_best(proposals)


@dataclass(frozen=True)
class ScalingRow:
    strategy: str
    n_rows: int
    median_seconds: float
    # time(2N)/time(N) implied by this size and the previous one; None for the first size
    growth_ratio: float | None


def run_scaling_experiment(generator, sizes: Sequence[int], strategies: Sequence[SplitterStrategy],
                           repeats: int = 5, *, clock: Callable[[], float] = time.perf_counter
                           ) -> list[ScalingRow]:
    """Median root split-search time per (strategy, size), run serially.

    ``generator`` is anything with ``make(n_rows) -> Dataset``.
    """
    sizes = list(sizes)
    if not sizes:
        return []
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly ascending")
    if repeats < 5:
        raise ValueError("at least 5 repetitions per point are required")
    data = {n: generator.make(n) for n in sizes}
    medians: dict[tuple[str, int], float] = {}
    for strategy in strategies:
        for n in sizes:
            ds = data[n]
            root_split_search(ds, strategy)  # warm-up
            times = []
            for _ in range(repeats):
                t0 = clock()
                root_split_search(ds, strategy)
                times.append(clock() - t0)
            medians[(strategy.kind.value, n)] = statistics.median(times)
    rows = []
    for strategy in strategies:
        name = strategy.kind.value
        prev = None
        for n in sizes:
            t = medians[(name, n)]
            ratio = None
            if prev is not None and prev[1] > 0:
                ratio = (t / prev[1]) ** (math.log(2.0) / math.log(n / prev[0]))
            rows.append(ScalingRow(name, n, t, ratio))
            prev = (n, t)
    return rows


def scaling_table(rows: Sequence[ScalingRow], delimiter: str = "\t") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(["strategy", "n_rows", "median_seconds", "growth_ratio"])
    for r in rows:
        w.writerow([r.strategy, r.n_rows, repr(r.median_seconds),
                    "" if r.growth_ratio is None else repr(r.growth_ratio)])
    return buf.getvalue()


def scaling_dicts(rows: Sequence[ScalingRow]) -> list[dict]:
    return [asdict(r) for r in rows]
