"""Command-line driver: train, predict, benchmark, ablate-gamma, scale.

Every option can also come from a JSON ``--config`` file whose keys are the
option names with dashes replaced by underscores. Flags override the file,
the file overrides built-in defaults, and the effective configuration is
echoed into every report.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from . import __version__
from .data import (
    MISSING_CODE,
    CsvConfig,
    Dataset,
    DatasetManifest,
    MissingPolicy,
    all_rows,
    apply_missing_policy,
    load_csv,
    load_dataset,
    load_manifest,
)
from .eval import (
    SCALING_FORMAT,
    default_models,
    make_folds,
    ModelSpec,
    run_benchmark,
    run_cv,
    run_gamma_ablation,
    run_scaling_experiment,
    scaling_dicts,
    scaling_table,
    summarize,
)
from .forest import (
    FOREST_FORMAT,
    Forest,
    ForestConfig,
    build_forest,
    deserialize_forest,
    mean_leaf_count,
    predict_forest_dataset,
    serialize_forest,
)
from .splitters import SplitterStrategy, StrategyKind
from .synthetic import ScalingGenerator, gaussian_mixture, heavy_tail_with_outlier, skewed_exponential
from .tree import (
    TREE_FORMAT,
    TreeConfig,
    build_tree,
    deserialize_tree,
    loads,
    predict_dataset,
    serialize_tree,
)

#: Optional environment variable naming the default output directory.
OUT_DIR_ENV = "AMSDTREE_OUT_DIR"
ABLATION_FORMAT = "amsdtree.ablation/1"
COMMANDS = ("train", "predict", "benchmark", "ablate-gamma", "scale")


class CliError(Exception):
    """A user-facing failure; the message is printed as a one-line diagnostic."""


@dataclass
class RunConfig:
    command: str
    data: list[str] = field(default_factory=list)
    manifest: list[str] = field(default_factory=list)
    model_out: str | None = None
    model_in: str | None = None
    strategy: str = "amsd"
    alpha: float = 0.25
    gamma_max: float = 2.0
    trees: int | None = None
    mtry: int | None = None
    folds: int = 10
    seed: int = 0
    workers: int | None = None
    out_dir: str | None = None
    format: str = "report"
    missing_policy: str = "impute"
    gamma_values: list[float] = field(default_factory=lambda: [0.0, 1.0, 2.0, 4.0])
    sizes: list[int] = field(default_factory=lambda: [10000, 20000, 40000, 80000])
    strategies: list[str] = field(default_factory=lambda: ["exhaustive", "msd", "amsd"])
    repeats: int = 5

    def validate(self) -> None:
        if self.alpha < 0:
            raise CliError(f"--alpha must be >= 0, got {self.alpha}")
        if self.gamma_max < 0:
            raise CliError(f"--gamma-max must be >= 0, got {self.gamma_max}")
        if self.folds < 2:
            raise CliError(f"--folds must be >= 2, got {self.folds}")
        if self.trees is not None and self.trees < 1:
            raise CliError(f"--trees must be >= 1, got {self.trees}")
        if self.mtry is not None and self.mtry < 1:
            raise CliError(f"--mtry must be >= 1, got {self.mtry}")
        if self.workers is not None and self.workers < 1:
            raise CliError(f"--workers must be >= 1, got {self.workers}")
        if self.repeats < 5:
            raise CliError(f"--repeats must be >= 5, got {self.repeats}")
        if self.strategy not in _STRATEGIES:
            raise CliError(f"unknown strategy {self.strategy!r}")
        bad = [s for s in self.strategies if s not in _STRATEGIES]
        if bad:
            raise CliError(f"unknown strategies {bad}")
        if any(g < 0 for g in self.gamma_values):
            raise CliError("gamma values must be >= 0")
        if any(n < 2 for n in self.sizes):
            raise CliError("sizes must be >= 2")
        if self.format not in ("report", "table"):
            raise CliError(f"unknown format {self.format!r}")
        if self.missing_policy not in ("drop", "impute"):
            raise CliError(f"unknown missing policy {self.missing_policy!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def tree_config(self) -> TreeConfig:
        return TreeConfig(SplitterStrategy.parse(self.strategy, self.alpha, self.gamma_max))

    @property
    def policy(self) -> MissingPolicy:
        return MissingPolicy(self.missing_policy)


_STRATEGIES = tuple(k.value for k in StrategyKind)


# -- argument parsing --------------------------------------------------------

def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _int_at_least(lo: int):
    def parse(text: str) -> int:
        v = int(text)
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {text}")
        return v
    return parse


def _float_list(text: str) -> list[float]:
    vals = [_nonneg_float(t) for t in text.split(",") if t.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return vals


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(float(t)) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if not vals:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return vals


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amsdtree", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"amsdtree {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    # defaults are None everywhere so that config-file values can fill the gaps
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option values")
    common.add_argument("--data", action="append", help="CSV file (class in the last column)")
    common.add_argument("--manifest", action="append", help="JSON dataset manifest")
    common.add_argument("--strategy", choices=_STRATEGIES)
    common.add_argument("--alpha", type=_nonneg_float)
    common.add_argument("--gamma-max", type=_nonneg_float)
    common.add_argument("--trees", type=_int_at_least(1))
    common.add_argument("--mtry", type=_int_at_least(1))
    common.add_argument("--folds", type=_int_at_least(2))
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=_int_at_least(1))
    common.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./amsdtree-out)")
    common.add_argument("--format", choices=("report", "table"))
    common.add_argument("--missing-policy", choices=("drop", "impute"))

    p = sub.add_parser("train", parents=[common], help="train a tree (or a forest with --trees)")
    p.add_argument("--model-out")
    p = sub.add_parser("predict", parents=[common], help="predict with a saved model")
    p.add_argument("--model-in")
    sub.add_parser("benchmark", parents=[common], help="cross-validated model comparison")
    p = sub.add_parser("ablate-gamma", parents=[common], help="sweep the skewness clip gamma_max")
    p.add_argument("--gamma-values", type=_float_list, help="comma-separated, e.g. 0,1,2,4")
    p = sub.add_parser("scale", parents=[common], help="root split-search timing vs. row count")
    p.add_argument("--sizes", type=_int_list, help="comma-separated row counts")
    p.add_argument("--strategies", type=_str_list, help="comma-separated strategy names")
    p.add_argument("--repeats", type=_int_at_least(5))
    return parser


def _read_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise CliError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON at position {exc.pos}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise CliError(f"{path}: config must be a JSON object")
    known = {f for f in RunConfig.__dataclass_fields__ if f != "command"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise CliError(f"{path}: unknown config keys {unknown}")
    for key in ("data", "manifest"):
        if isinstance(raw.get(key), str):
            raw[key] = [raw[key]]
    return raw


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    values: dict = {}
    if args.config:
        values.update(_read_config_file(args.config))
    for key, v in vars(args).items():
        if key in ("command", "config") or v is None:
            continue
        values[key] = v
    try:
        cfg = RunConfig(command=args.command, **values)
    except TypeError as exc:
        raise CliError(f"bad configuration: {exc}") from exc
    if cfg.out_dir is None:
        cfg.out_dir = os.environ.get(OUT_DIR_ENV) or "amsdtree-out"
    cfg.validate()
    return cfg


# -- io helpers ---------------------------------------------------------------

def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def bundled_manifest_path() -> str:
    return str(resources.files("amsdtree").joinpath("resources", "toy.json"))


def _dataset_from_csv(path: str) -> Dataset:
    if not os.path.exists(path):
        raise CliError(f"data file not found: {path}")
    ds = load_csv(path, CsvConfig())
    return Dataset(ds.schema, ds.columns, ds.labels, os.path.splitext(os.path.basename(path))[0])


def _manifest(path: str) -> DatasetManifest:
    m = load_manifest(path)
    if not os.path.exists(m.path):
        raise CliError(f"dataset {m.name!r}: missing file {m.path}")
    return m


def _single_training_set(cfg: RunConfig) -> Dataset:
    sources = len(cfg.data) + len(cfg.manifest)
    if sources != 1:
        raise CliError(f"{cfg.command} needs exactly one --data or --manifest (got {sources})")
    if cfg.data:
        return apply_missing_policy(_dataset_from_csv(cfg.data[0]), cfg.policy)
    return load_dataset(_manifest(cfg.manifest[0]), cfg.policy)


def _load_model(path: str):
    if not path:
        raise CliError("predict needs --model-in")
    if not os.path.exists(path):
        raise CliError(f"model file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    fmt = loads(text).get("format")
    if fmt == FOREST_FORMAT:
        return deserialize_forest(text)
    if fmt == TREE_FORMAT:
        return deserialize_tree(text)
    raise CliError(f"{path}: unrecognised model format {fmt!r}")


# -- commands -----------------------------------------------------------------

def cmd_train(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    ds = _single_training_set(cfg)
    view = all_rows(ds)
    path = cfg.model_out or os.path.join(cfg.out_dir, "model.json")
    if cfg.trees is not None:
        fc = ForestConfig(n_trees=cfg.trees, mtry=cfg.mtry, seed=cfg.seed, tree_config=cfg.tree_config,
                          workers=cfg.workers)
        model = build_forest(view, fc)
        write_atomic(path, serialize_forest(model))
        lines = [f"model: {path}", "kind: forest", f"strategy: {_describe(cfg)}",
                 f"trees: {fc.n_trees}", f"mtry: {fc.resolved_mtry(ds.schema.n_attributes)}",
                 f"mean leaves per tree: {mean_leaf_count(model):.2f}"]
    else:
        model = build_tree(view, cfg.tree_config)
        write_atomic(path, serialize_tree(model))
        s = model.stats
        lines = [f"model: {path}", "kind: tree", f"strategy: {_describe(cfg)}",
                 f"leaves: {s.leaf_count}", f"nodes: {s.node_count}", f"depth: {s.max_depth}",
                 f"build seconds: {s.build_seconds:.6f}"]
    lines.insert(1, f"rows: {ds.row_count}")
    out.write("\n".join(lines) + "\n")
    return 0


def _describe(cfg: RunConfig) -> str:
    if cfg.strategy == "amsd":
        return f"amsd (alpha={cfg.alpha}, gamma_max={cfg.gamma_max})"
    return cfg.strategy


def cmd_predict(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model = _load_model(cfg.model_in)
    schema = model.schema
    sources = len(cfg.data) + len(cfg.manifest)
    if sources != 1:
        raise CliError(f"predict needs exactly one --data or --manifest (got {sources})")
    if cfg.data:
        path, csv_cfg = cfg.data[0], CsvConfig(class_column=schema.class_attribute)
        if not os.path.exists(path):
            raise CliError(f"data file not found: {path}")
    else:
        m = _manifest(cfg.manifest[0])
        path, csv_cfg = m.path, m.csv_config()
        csv_cfg.class_column = schema.class_attribute
    ds = load_csv(path, csv_cfg, schema=schema)
    if isinstance(model, Forest):
        pred = predict_forest_dataset(model, ds)
    else:
        pred = predict_dataset(model, ds)
    target = os.path.join(cfg.out_dir, "predictions.txt")
    write_atomic(target, "".join(schema.class_labels[p] + "\n" for p in pred))
    out.write(f"predictions: {target} ({len(pred)} rows)\n")
    known = ds.labels != MISSING_CODE
    if known.any():
        hits = int(np.count_nonzero(pred[known] == ds.labels[known]))
        out.write(f"accuracy: {hits / int(known.sum()):.6f} ({hits}/{int(known.sum())})\n")
    return 0


def _benchmark_sources(cfg: RunConfig) -> list:
    sources: list = [_dataset_from_csv(p) for p in cfg.data]
    sources += [_manifest(p) for p in cfg.manifest]
    if not sources:
        # offline default: the bundled toy set plus two seeded synthetic families
        sources = [load_manifest(bundled_manifest_path()),
                   gaussian_mixture(seed=cfg.seed), skewed_exponential(seed=cfg.seed)]
    return sources


def cmd_benchmark(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    models = default_models(n_trees=cfg.trees or 100, seed=cfg.seed, alpha=cfg.alpha,
                            gamma_max=cfg.gamma_max, mtry=cfg.mtry, workers=cfg.workers)
    report = run_benchmark(_benchmark_sources(cfg), models, cfg.folds, cfg.seed, policy=cfg.policy,
                           progress=lambda msg: print(msg, file=sys.stderr))
    report.extra = cfg.to_dict()
    if cfg.format == "report":
        main_path = os.path.join(cfg.out_dir, "report.json")
        write_atomic(main_path, report.to_json() + "\n")
    else:
        main_path = os.path.join(cfg.out_dir, "report.tsv")
        write_atomic(main_path, report.to_table())
    for name, text in report.plot_tables().items():
        write_atomic(os.path.join(cfg.out_dir, f"{name}.tsv"), text)
    out.write(report.to_table())
    out.write(f"report: {main_path}\n")
    return 0


ABLATION_COLUMNS = ("model", "gamma_max", "accuracy_mean", "accuracy_std", "binned_nodes",
                    "empty_tail_nodes", "empty_tail_fraction")


def cmd_ablate_gamma(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    if cfg.data or cfg.manifest:
        ds = _single_training_set(cfg)
    else:
        ds = heavy_tail_with_outlier(seed=cfg.seed)
    tc = TreeConfig()
    rows = run_gamma_ablation(ds, cfg.gamma_values, cfg.folds, cfg.seed, cfg.alpha, tc)
    msd = summarize(ds.name, "msd", run_cv(ds, ModelSpec("msd", TreeConfig(SplitterStrategy.msd())),
                                            make_folds(ds.labels, cfg.folds, cfg.seed)))
    table = [("msd", "", repr(msd.accuracy_mean), repr(msd.accuracy_std), "", "", "")]
    table += [("amsd", repr(r.gamma_max), repr(r.accuracy_mean), repr(r.accuracy_std),
               str(r.binned_nodes), str(r.empty_tail_nodes), repr(r.empty_tail_fraction)) for r in rows]
    text = "\t".join(ABLATION_COLUMNS) + "\n" + "".join("\t".join(t) + "\n" for t in table)
    if cfg.format == "report":
        doc = {
            "format": ABLATION_FORMAT,
            "dataset": ds.name,
            "config": cfg.to_dict(),
            "msd_reference": {"accuracy_mean": msd.accuracy_mean, "accuracy_std": msd.accuracy_std},
            "rows": [dict(asdict(r), empty_tail_fraction=r.empty_tail_fraction) for r in rows],
        }
        path = os.path.join(cfg.out_dir, "ablation.json")
        write_atomic(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        path = os.path.join(cfg.out_dir, "ablation.tsv")
        write_atomic(path, text)
    out.write(text)
    out.write(f"report: {path}\n")
    return 0


def cmd_scale(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    sizes = sorted(set(cfg.sizes))
    strategies = [SplitterStrategy.parse(s, cfg.alpha, cfg.gamma_max) for s in cfg.strategies]
    rows = run_scaling_experiment(ScalingGenerator(seed=cfg.seed), sizes, strategies, cfg.repeats)
    table = scaling_table(rows)
    if cfg.format == "report":
        doc = {"format": SCALING_FORMAT, "config": cfg.to_dict(), "rows": scaling_dicts(rows)}
        path = os.path.join(cfg.out_dir, "scaling.json")
        write_atomic(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        path = os.path.join(cfg.out_dir, "scaling.tsv")
    # the delimited table is the plot data and is always written
    write_atomic(os.path.join(cfg.out_dir, "scaling.tsv"), table)
    out.write(table)
    out.write(f"report: {path}\n")
    return 0


HANDLERS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "benchmark": cmd_benchmark,
    "ablate-gamma": cmd_ablate_gamma,
    "scale": cmd_scale,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except CliError as exc:
        parser.error(str(exc))
    try:
        return HANDLERS[cfg.command](cfg)
    except (CliError, ValueError, OSError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"amsdtree {cfg.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
