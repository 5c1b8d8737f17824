"""Columnar datasets, schemas and file ingestion (CSV, a subset of ARFF).

Continuous columns are float64 arrays with NaN as the missing marker.
Categorical columns and labels are integer code arrays with ``MISSING_CODE``.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

MISSING_CODE = -1
DEFAULT_MISSING_TOKENS = frozenset({"?", ""})
DEFAULT_DISTINCT_THRESHOLD = 10


class DataFormatError(ValueError):
    """Malformed input file or inconsistent dataset contents."""


class SchemaMismatchError(ValueError):
    """Input does not match the schema a model was trained on."""

    def __init__(self, message: str, attribute: str | None = None):
        super().__init__(message)
        self.attribute = attribute


class AttributeKind(enum.Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: AttributeKind
    # code -> token; empty for continuous attributes
    categories: tuple[str, ...] = ()

    @property
    def is_continuous(self) -> bool:
        return self.kind is AttributeKind.CONTINUOUS


@dataclass(frozen=True)
class Schema:
    attributes: tuple[Attribute, ...]
    class_attribute: str
    class_labels: tuple[str, ...]

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise DataFormatError(f"duplicate attribute names in {names}")
        if self.class_attribute in names:
            raise DataFormatError(f"class attribute {self.class_attribute!r} listed as a predictor")
        if not self.class_labels:
            raise DataFormatError("schema has no class labels")
        if len(set(self.class_labels)) != len(self.class_labels):
            raise DataFormatError(f"duplicate class labels in {self.class_labels}")

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    def index_of(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "attributes": [
                {"name": a.name, "kind": a.kind.value, "categories": list(a.categories)}
                for a in self.attributes
            ],
            "class_attribute": self.class_attribute,
            "class_labels": list(self.class_labels),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Schema":
        attrs = tuple(
            Attribute(a["name"], AttributeKind(a["kind"]), tuple(a.get("categories", ())))
            for a in d["attributes"]
        )
        return cls(attrs, d["class_attribute"], tuple(d["class_labels"]))

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def diff(self, other: "Schema") -> str | None:
        """Name of the first attribute that differs from ``other``, if any."""
        if self.class_attribute != other.class_attribute:
            return self.class_attribute
        for i, a in enumerate(self.attributes):
            if i >= len(other.attributes) or other.attributes[i] != a:
                return a.name
        if len(other.attributes) > len(self.attributes):
            return other.attributes[len(self.attributes)].name
        if self.class_labels != other.class_labels:
            return self.class_attribute
        return None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column-major table. ``columns[j]`` belongs to ``schema.attributes[j]``."""

    schema: Schema
    columns: tuple[np.ndarray, ...]
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        n = int(self.labels.shape[0])
        if len(self.columns) != self.schema.n_attributes:
            raise DataFormatError("column count does not match schema")
        for attr, col in zip(self.schema.attributes, self.columns):
            if col.shape[0] != n:
                raise DataFormatError(f"column {attr.name!r} has {col.shape[0]} rows, expected {n}")
            if not attr.is_continuous and col.size:
                if col.min() < MISSING_CODE or col.max() >= len(attr.categories):
                    raise DataFormatError(f"invalid category code in column {attr.name!r}")
            col.setflags(write=False)
        if n and (self.labels.min() < MISSING_CODE or self.labels.max() >= self.schema.n_classes):
            raise DataFormatError("label index out of range")
        self.labels.setflags(write=False)

    @property
    def row_count(self) -> int:
        return int(self.labels.shape[0])

    @property
    def has_labels(self) -> bool:
        return bool(self.row_count) and bool((self.labels != MISSING_CODE).any())

    def continuous_columns(self) -> dict[str, np.ndarray]:
        return {a.name: c for a, c in zip(self.schema.attributes, self.columns) if a.is_continuous}

    def categorical_columns(self) -> dict[str, np.ndarray]:
        return {a.name: c for a, c in zip(self.schema.attributes, self.columns) if not a.is_continuous}

    def missing_mask(self) -> np.ndarray:
        """Rows with any missing predictor or label."""
        mask = self.labels == MISSING_CODE
        for attr, col in zip(self.schema.attributes, self.columns):
            mask |= np.isnan(col) if attr.is_continuous else col == MISSING_CODE
        return mask

    def row(self, i: int) -> tuple:
        return tuple(col[i] for col in self.columns)

    def take(self, rows) -> "Dataset":
        idx = np.asarray(rows, dtype=np.intp)
        return Dataset(self.schema, tuple(c[idx] for c in self.columns), self.labels[idx], self.name)

    def equals(self, other: "Dataset") -> bool:
        if self.schema != other.schema or self.row_count != other.row_count:
            return False
        if not np.array_equal(self.labels, other.labels):
            return False
        return all(np.array_equal(a, b, equal_nan=a.dtype.kind == "f")
                   for a, b in zip(self.columns, other.columns))

    @classmethod
    def from_arrays(
        cls,
        X,
        y,
        attribute_names: Sequence[str] | None = None,
        class_labels: Sequence[str] | None = None,
        class_attribute: str = "class",
        name: str = "",
    ) -> "Dataset":
        """All-continuous dataset from a 2-D array and integer labels."""
        X = np.asarray(X, dtype=np.float64)
        y = np.array(y, dtype=np.int64)
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        names = list(attribute_names or [f"x{j}" for j in range(X.shape[1])])
        if class_labels is None:
            class_labels = [str(c) for c in range(int(y.max()) + 1 if y.size else 1)]
        schema = Schema(
            tuple(Attribute(n, AttributeKind.CONTINUOUS) for n in names),
            class_attribute,
            tuple(class_labels),
        )
        cols = tuple(np.ascontiguousarray(X[:, j]) for j in range(X.shape[1]))
        return cls(schema, cols, y, name)


@dataclass(frozen=True, eq=False)
class RowView:
    """A dataset plus an index list; duplicates are allowed (bootstrap samples)."""

    dataset: Dataset
    indices: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def column(self, j: int) -> np.ndarray:
        return self.dataset.columns[j][self.indices]

    def labels(self) -> np.ndarray:
        return self.dataset.labels[self.indices]

    def subset(self, positions) -> "RowView":
        return RowView(self.dataset, self.indices[positions])


def select_rows(ds: Dataset, rows: Iterable[int]) -> RowView:
    idx = np.asarray(list(rows) if not isinstance(rows, np.ndarray) else rows, dtype=np.intp)
    if idx.ndim != 1:
        raise ValueError("row index list must be one-dimensional")
    if idx.size and (idx.min() < 0 or idx.max() >= ds.row_count):
        bad = int(idx[(idx < 0) | (idx >= ds.row_count)][0])
        raise IndexError(f"row index {bad} out of range for {ds.row_count} rows")
    return RowView(ds, idx)


def all_rows(ds: Dataset) -> RowView:
    return RowView(ds, np.arange(ds.row_count, dtype=np.intp))


# -- missing values ---------------------------------------------------------

class MissingPolicy(enum.Enum):
    DROP_ROWS = "drop"
    IMPUTE_MEAN_MODE = "impute"


def apply_missing_policy(ds: Dataset, policy: MissingPolicy = MissingPolicy.IMPUTE_MEAN_MODE) -> Dataset:
    """Return a dataset without missing markers.

    Rows whose label is missing are dropped under both policies; a label is
    never imputed.
    """
    mask = ds.missing_mask()
    if not mask.any():
        return ds
    if policy is MissingPolicy.DROP_ROWS:
        return ds.take(np.flatnonzero(~mask))

    cols = []
    for attr, col in zip(ds.schema.attributes, ds.columns):
        if attr.is_continuous:
            miss = np.isnan(col)
            if miss.any():
                if miss.all():
                    raise DataFormatError(f"column {attr.name!r} is entirely missing; cannot impute")
                col = col.copy()
                col[miss] = math.fsum(col[~miss]) / int((~miss).sum())
        else:
            miss = col == MISSING_CODE
            if miss.any():
                if miss.all():
                    raise DataFormatError(f"column {attr.name!r} is entirely missing; cannot impute")
                counts = np.bincount(col[~miss], minlength=len(attr.categories))
                col = col.copy()
                col[miss] = int(np.argmax(counts))
        cols.append(col)
    keep = np.flatnonzero(ds.labels != MISSING_CODE)
    out = Dataset(ds.schema, tuple(cols), ds.labels, ds.name)
    return out if keep.size == ds.row_count else out.take(keep)


# -- CSV --------------------------------------------------------------------

@dataclass
class CsvConfig:
    delimiter: str = ","
    header: bool = True
    # column name or position; None selects the last column
    class_column: str | int | None = None
    missing_tokens: frozenset[str] = DEFAULT_MISSING_TOKENS
    kinds: dict[str, AttributeKind] = field(default_factory=dict)
    distinct_threshold: int = DEFAULT_DISTINCT_THRESHOLD


def _parse_number(token: str) -> float | None:
    try:
        v = float(token)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _read_rows(path, delimiter: str) -> list[list[str]]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such data file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [[tok.strip() for tok in r] for r in csv.reader(fh, delimiter=delimiter, skipinitialspace=True)]
    return [r for r in rows if any(tok for tok in r)]


def _resolve_class_index(header: list[str], selector, required: bool) -> int | None:
    if selector is None:
        return len(header) - 1
    if isinstance(selector, int):
        if not -len(header) <= selector < len(header):
            raise DataFormatError(f"class column index {selector} out of range")
        return selector % len(header)
    if selector in header:
        return header.index(selector)
    if required:
        raise DataFormatError(f"class column {selector!r} not found in header")
    return None


def _encode_labels(tokens: list[str], missing: frozenset[str], known: Sequence[str] | None):
    labels = list(known) if known is not None else []
    lookup = {t: i for i, t in enumerate(labels)}
    out = np.full(len(tokens), MISSING_CODE, dtype=np.int64)
    unknown = 0
    for i, t in enumerate(tokens):
        if t in missing:
            continue
        code = lookup.get(t)
        if code is None:
            if known is not None:
                unknown += 1
                continue
            code = lookup[t] = len(labels)
            labels.append(t)
        out[i] = code
    if unknown:
        log.warning("%d rows carry class labels unknown to the model; treated as missing", unknown)
    return out, tuple(labels)


def _encode_categorical(name, tokens, missing, known: Sequence[str] | None):
    cats = list(known) if known is not None else []
    lookup = {t: i for i, t in enumerate(cats)}
    out = np.full(len(tokens), MISSING_CODE, dtype=np.int64)
    unseen = 0
    for i, t in enumerate(tokens):
        if t in missing:
            continue
        code = lookup.get(t)
        if code is None:
            if known is not None:
                unseen += 1
                continue
            code = lookup[t] = len(cats)
            cats.append(t)
        out[i] = code
    if unseen:
        log.warning("column %r: %d unseen category tokens treated as missing", name, unseen)
    return out, tuple(cats)


def _encode_continuous(name, tokens, missing, row_offset: int) -> np.ndarray:
    out = np.empty(len(tokens), dtype=np.float64)
    for i, t in enumerate(tokens):
        if t in missing:
            out[i] = np.nan
            continue
        v = _parse_number(t)
        if v is None:
            raise DataFormatError(
                f"column {name!r}, row {i + row_offset}: cannot parse {t!r} as a number"
            )
        out[i] = v
    return out


def _infer_kind(tokens: list[str], missing: frozenset[str], threshold: int) -> AttributeKind:
    distinct = set()
    for t in tokens:
        if t in missing:
            continue
        if _parse_number(t) is None:
            return AttributeKind.CATEGORICAL
        distinct.add(t)
    # numeric tokens that differ only in spelling ("1" vs "1.0") count once
    n_distinct = len({float(t) for t in distinct})
    return AttributeKind.CONTINUOUS if n_distinct > threshold else AttributeKind.CATEGORICAL


def _build_dataset(header, body, config: CsvConfig, schema: Schema | None, name: str, row_offset: int) -> Dataset:
    width = len(header)
    for i, r in enumerate(body):
        if len(r) != width:
            raise DataFormatError(
                f"row {i + row_offset} has {len(r)} fields, expected {width}"
            )
    if not body:
        raise DataFormatError("file has zero data rows")
    columns_tokens = list(zip(*body))
    missing = frozenset(config.missing_tokens)

    if schema is not None:
        class_idx = header.index(schema.class_attribute) if schema.class_attribute in header else None
        cols = []
        for attr in schema.attributes:
            if attr.name not in header:
                raise SchemaMismatchError(f"input is missing attribute {attr.name!r}", attr.name)
            toks = list(columns_tokens[header.index(attr.name)])
            if attr.is_continuous:
                try:
                    cols.append(_encode_continuous(attr.name, toks, missing, row_offset))
                except DataFormatError as exc:
                    raise SchemaMismatchError(
                        f"attribute {attr.name!r} is continuous in the model: {exc}", attr.name
                    ) from exc
            else:
                cols.append(_encode_categorical(attr.name, toks, missing, attr.categories)[0])
        if class_idx is None:
            labels = np.full(len(body), MISSING_CODE, dtype=np.int64)
        else:
            labels, _ = _encode_labels(list(columns_tokens[class_idx]), missing, schema.class_labels)
        return Dataset(schema, tuple(cols), labels, name)

    class_idx = _resolve_class_index(header, config.class_column, required=True)
    label_tokens = list(columns_tokens[class_idx])
    labels, class_labels = _encode_labels(label_tokens, missing, None)
    if not class_labels:
        raise DataFormatError(f"class column {header[class_idx]!r} is entirely missing")

    attrs, cols = [], []
    for j, col_name in enumerate(header):
        if j == class_idx:
            continue
        toks = list(columns_tokens[j])
        kind = config.kinds.get(col_name) or _infer_kind(toks, missing, config.distinct_threshold)
        if kind is AttributeKind.CONTINUOUS:
            cols.append(_encode_continuous(col_name, toks, missing, row_offset))
            attrs.append(Attribute(col_name, kind))
        else:
            codes, cats = _encode_categorical(col_name, toks, missing, None)
            cols.append(codes)
            attrs.append(Attribute(col_name, kind, cats))
    unknown = set(config.kinds) - set(header)
    if unknown:
        raise DataFormatError(f"kind overrides name unknown columns: {sorted(unknown)}")
    return Dataset(Schema(tuple(attrs), header[class_idx], class_labels), tuple(cols), labels, name)


def load_csv(path, config: CsvConfig | None = None, schema: Schema | None = None) -> Dataset:
    """Load a delimited file.

    With ``schema`` given (prediction time), columns are matched by name and
    encoded with the schema's category maps; the class column may be absent.
    """
    config = config or CsvConfig()
    rows = _read_rows(path, config.delimiter)
    if not rows:
        raise DataFormatError(f"{path}: file has zero data rows")
    if config.header:
        header, body, offset = rows[0], rows[1:], 2
    else:
        header, body, offset = [f"c{j}" for j in range(len(rows[0]))], rows, 1
    if len(set(header)) != len(header):
        raise DataFormatError(f"{path}: duplicate column names in header")
    try:
        return _build_dataset(header, body, config, schema, os.path.basename(str(path)), offset)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def _format_float(v: float) -> str:
    return repr(float(v))


def write_csv(ds: Dataset, path, delimiter: str = ",", missing_token: str = "?") -> None:
    """Write ``ds`` with a header row; class column last. Floats use ``repr`` so they round-trip."""
    header = [a.name for a in ds.schema.attributes] + [ds.schema.class_attribute]
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.row_count):
            out = []
            for attr, col in zip(ds.schema.attributes, ds.columns):
                v = col[i]
                if attr.is_continuous:
                    out.append(missing_token if np.isnan(v) else _format_float(v))
                else:
                    out.append(missing_token if v == MISSING_CODE else attr.categories[v])
            lab = ds.labels[i]
            out.append(missing_token if lab == MISSING_CODE else ds.schema.class_labels[lab])
            w.writerow(out)
    os.replace(tmp, path)


# -- ARFF (relation / attribute / data only) --------------------------------

def _split_arff_attribute(line: str) -> tuple[str, str]:
    rest = line.split(None, 1)[1].strip()
    if rest[0] in "'\"":
        q = rest[0]
        end = rest.index(q, 1)
        return rest[1:end], rest[end + 1:].strip()
    name, typ = rest.split(None, 1)
    return name, typ.strip()


def load_arff(path, class_attribute: str | None = None,
              missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS) -> Dataset:
    """Read the ``@relation`` / ``@attribute`` / ``@data`` subset of ARFF.

    ``numeric``/``real``/``integer`` attributes are continuous; ``{a,b}``
    nominals are categorical with the declared code order. The class defaults
    to the last attribute.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such data file: {path}")
    decl: list[tuple[str, AttributeKind, tuple[str, ...]]] = []
    data_lines: list[str] = []
    in_data = False
    data_start = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if in_data:
                data_lines.append(line)
                continue
            low = line.lower()
            if low.startswith("@relation"):
                continue
            if low.startswith("@attribute"):
                name, typ = _split_arff_attribute(line)
                if typ.startswith("{"):
                    if not typ.endswith("}"):
                        raise DataFormatError(f"{path}, line {lineno}: unterminated nominal type")
                    cats = next(csv.reader([typ[1:-1]], skipinitialspace=True, quotechar="'"))
                    decl.append((name, AttributeKind.CATEGORICAL, tuple(c.strip() for c in cats)))
                elif typ.lower() in ("numeric", "real", "integer"):
                    decl.append((name, AttributeKind.CONTINUOUS, ()))
                else:
                    raise DataFormatError(f"{path}, line {lineno}: unsupported attribute type {typ!r}")
            elif low.startswith("@data"):
                in_data = True
                data_start = lineno + 1
            else:
                raise DataFormatError(f"{path}, line {lineno}: unexpected header line")
    if not decl:
        raise DataFormatError(f"{path}: no attributes declared")
    body = [[t.strip() for t in r] for r in csv.reader(data_lines, skipinitialspace=True, quotechar="'")]
    if not body:
        raise DataFormatError(f"{path}: file has zero data rows")
    names = [d[0] for d in decl]
    cls_name = class_attribute or names[-1]
    if cls_name not in names:
        raise DataFormatError(f"{path}: class attribute {cls_name!r} not declared")
    cls_decl = decl[names.index(cls_name)]
    if cls_decl[1] is not AttributeKind.CATEGORICAL:
        raise DataFormatError(f"{path}: class attribute {cls_name!r} must be nominal")
    schema = Schema(
        tuple(Attribute(n, k, c) for n, k, c in decl if n != cls_name),
        cls_name,
        cls_decl[2],
    )
    config = CsvConfig(missing_tokens=frozenset(missing_tokens))
    try:
        ds = _build_dataset(names, body, config, schema, os.path.basename(str(path)), data_start)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    if not ds.has_labels:
        raise DataFormatError(f"{path}: class column {cls_name!r} is entirely missing")
    return ds


# -- manifests --------------------------------------------------------------

@dataclass
class DatasetManifest:
    """One benchmark dataset: where it lives and how to read it."""

    name: str
    path: str
    class_column: str | int | None = None
    kinds: dict[str, AttributeKind] = field(default_factory=dict)
    missing_tokens: frozenset[str] = DEFAULT_MISSING_TOKENS
    delimiter: str = ","
    header: bool = True
    format: str = "csv"
    # optional: keep at most this many rows (seeded, stratified-agnostic draw)
    subset_rows: int | None = None
    subset_seed: int = 0

    def csv_config(self) -> CsvConfig:
        return CsvConfig(self.delimiter, self.header, self.class_column,
                         frozenset(self.missing_tokens), dict(self.kinds))


def load_manifest(path) -> DatasetManifest:
    """Parse a JSON manifest. Relative data paths resolve against the manifest's directory."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such manifest: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid manifest JSON at position {exc.pos}: {exc.msg}") from exc
    if "path" not in raw:
        raise DataFormatError(f"{path}: manifest must name a 'path'")
    data_path = raw["path"]
    if not os.path.isabs(data_path):
        data_path = os.path.join(os.path.dirname(os.path.abspath(path)), data_path)
    fmt = raw.get("format") or ("arff" if data_path.lower().endswith(".arff") else "csv")
    return DatasetManifest(
        name=raw.get("name") or os.path.splitext(os.path.basename(data_path))[0],
        path=data_path,
        class_column=raw.get("class_column"),
        kinds={k: AttributeKind(v) for k, v in raw.get("kinds", {}).items()},
        missing_tokens=frozenset(raw.get("missing_tokens", sorted(DEFAULT_MISSING_TOKENS))),
        delimiter=raw.get("delimiter", ","),
        header=raw.get("header", True),
        format=fmt,
        subset_rows=raw.get("subset_rows"),
        subset_seed=raw.get("subset_seed", 0),
    )


def load_dataset(manifest: DatasetManifest,
                 policy: MissingPolicy | None = MissingPolicy.IMPUTE_MEAN_MODE) -> Dataset:
    if manifest.format == "arff":
        cls = manifest.class_column if isinstance(manifest.class_column, str) else None
        ds = load_arff(manifest.path, cls, manifest.missing_tokens)
    else:
        ds = load_csv(manifest.path, manifest.csv_config())
    ds = Dataset(ds.schema, ds.columns, ds.labels, manifest.name)
    if manifest.subset_rows is not None and manifest.subset_rows < ds.row_count:
        rng = np.random.default_rng(manifest.subset_seed)
        ds = ds.take(np.sort(rng.choice(ds.row_count, manifest.subset_rows, replace=False)))
    return apply_missing_policy(ds, policy) if policy is not None else ds
