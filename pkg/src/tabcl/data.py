"""CSV ingestion, schema inference, feature encoding, splitting, persistence.

The pipeline turns a headered CSV into a :class:`Dataset`: an n x d float64
feature matrix (z-scored numerics, one-hot categoricals with an extra
"unknown" slot) plus a label vector.  Standardization statistics are fitted
on one split and can be re-applied to any other, and splits round-trip
through a directory of full-precision CSVs plus a JSON sidecar.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, FormatError
from .numerics import RngStream

SCHEMA_VERSION = 1
MISSING_TOKENS = frozenset({"", "?", "NA", "N/A", "nan", "NaN", "null", "None"})
MISSING_CATEGORY = "<missing>"
UNKNOWN_SLOT = "<unknown>"
DEFAULT_CATEGORY_CUTOFF = 20

NUMERIC = "numeric"
CATEGORICAL = "categorical"
CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass(frozen=True)
class Column:
    """One feature column: ``kind`` is "numeric" or "categorical"."""

    name: str
    kind: str
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"unknown column kind: {self.kind!r}")
        if self.kind == CATEGORICAL:
            if list(self.categories) != sorted(set(self.categories)):
                raise ValueError(f"categories of {self.name!r} must be sorted and unique")
        elif self.categories:
            raise ValueError(f"numeric column {self.name!r} cannot carry categories")


@dataclass(frozen=True)
class Schema:
    """Feature columns, the single target column, and the task kind."""

    features: tuple[Column, ...]
    target: str
    task: str
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown task: {self.task!r}")
        names = [c.name for c in self.features]
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature column names")
        if self.target in names:
            raise ValueError(f"target {self.target!r} also listed as a feature")
        if self.task == CLASSIFICATION:
            if len(self.classes) < 2:
                raise ValueError("classification schema needs >= 2 classes")
            if list(self.classes) != sorted(set(self.classes)):
                raise ValueError("classes must be sorted and unique")

    def encoded_names(self) -> tuple[str, ...]:
        """Names of the encoded feature columns, in encoding order."""
        out: list[str] = []
        for col in self.features:
            if col.kind == NUMERIC:
                out.append(col.name)
            else:
                out.extend(f"{col.name}={c}" for c in col.categories)
                out.append(f"{col.name}={UNKNOWN_SLOT}")
        return tuple(out)

    @property
    def encoded_dim(self) -> int:
        return len(self.encoded_names())

    def to_dict(self) -> dict:
        return {
            "features": [
                {"name": c.name, "kind": c.kind, "categories": list(c.categories)}
                for c in self.features
            ],
            "target": self.target,
            "task": self.task,
            "classes": list(self.classes),
        }

    @staticmethod
    def from_dict(d: dict) -> "Schema":
        try:
            cols = tuple(
                Column(c["name"], c["kind"], tuple(c.get("categories", ())))
                for c in d["features"]
            )
            return Schema(cols, d["target"], d["task"], tuple(d.get("classes", ())))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed schema block: {exc}") from exc


@dataclass
class RawTable:
    """A parsed CSV: header plus string-valued rows of uniform arity."""

    header: list[str]
    rows: list[list[str]]


@dataclass
class Dataset:
    """Encoded feature matrix, labels, schema, and (optional) fit statistics.

    ``stats`` maps each numeric column name to its imputation median and the
    mean/std used for z-scoring, all fitted on the split the stats came from.
    """

    features: np.ndarray
    labels: np.ndarray
    schema: Schema
    stats: dict | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("features must be a non-empty 2-D matrix")
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite entries")
        if self.features.shape[1] != self.schema.encoded_dim:
            raise ValueError(
                f"feature width {self.features.shape[1]} does not match "
                f"schema encoded dim {self.schema.encoded_dim}"
            )
        self.labels = np.asarray(self.labels)
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels length must equal the number of rows")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> "Dataset":
        """Row subset sharing schema and stats."""
        return Dataset(self.features[idx], self.labels[idx], self.schema, self.stats)


@dataclass
class SplitPair:
    """An in-distribution / out-of-distribution partition of one dataset."""

    d_in: Dataset
    d_ood: Dataset
    threshold: float
    detector: str
    norm: str
    seed: int | None = None

    def __post_init__(self):
        if self.d_in.schema != self.d_ood.schema:
            raise ValueError("split sides must share one schema")

    @property
    def m(self) -> int:
        return self.d_in.n

    @property
    def n(self) -> int:
        return self.d_ood.n

    @property
    def anomalous(self) -> bool:
        """True when the OOD side is at least as large as the ID side."""
        return self.m <= self.n


def read_csv(path, delimiter: str = ",") -> RawTable:
    """Parse a headered CSV, enforcing uniform row arity.

    Raises FormatError naming the offending row when arity differs.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh, delimiter=delimiter)
            try:
                header = next(reader)
            except StopIteration:
                raise FormatError(f"{path}: empty file") from None
            header = [h.strip() for h in header]
            rows = []
            for i, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise FormatError(
                        f"{path}: row {i} has {len(row)} fields, expected {len(header)}"
                    )
                rows.append([cell.strip() for cell in row])
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    return RawTable(header, rows)


def _parse_number(cell: str, col: str, row: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise FormatError(f"column {col!r}, row {row}: cannot parse {cell!r} as a number") from None
    if not np.isfinite(v):
        raise FormatError(f"column {col!r}, row {row}: non-finite value {cell!r}")
    return v


def _is_number(cell: str) -> bool:
    try:
        return np.isfinite(float(cell))
    except ValueError:
        return False


def infer_schema(
    raw: RawTable,
    target: str,
    task: str | None = None,
    category_cutoff: int = DEFAULT_CATEGORY_CUTOFF,
) -> Schema:
    """Infer column kinds from a raw table.

    A column is numeric iff every non-missing cell parses as a finite number
    AND it has more than ``category_cutoff`` distinct values; otherwise it is
    categorical.  The target column must be named explicitly; the task is
    inferred from the target by the same rule unless given.
    """
    if not target:
        raise ConfigError("no target column designated")
    if target not in raw.header:
        raise ConfigError(f"target column {target!r} not in header {raw.header}")
    if len(raw.rows) < 1:
        raise FormatError("need at least one data row to infer a schema")

    def column_cells(name: str) -> list[str]:
        j = raw.header.index(name)
        return [row[j] for row in raw.rows]

    def classify(cells: list[str]) -> tuple[str, bool]:
        present = [c for c in cells if c not in MISSING_TOKENS]
        has_missing = len(present) < len(cells)
        if present and all(_is_number(c) for c in present):
            if len(set(present)) > category_cutoff:
                return NUMERIC, has_missing
        return CATEGORICAL, has_missing

    features = []
    for name in raw.header:
        if name == target:
            continue
        cells = column_cells(name)
        kind, has_missing = classify(cells)
        if kind == NUMERIC:
            features.append(Column(name, NUMERIC))
        else:
            vocab = sorted(set(c for c in cells if c not in MISSING_TOKENS))
            if has_missing:
                vocab = sorted(set(vocab) | {MISSING_CATEGORY})
            features.append(Column(name, CATEGORICAL, tuple(vocab)))

    target_cells = column_cells(target)
    if any(c in MISSING_TOKENS for c in target_cells):
        raise FormatError(f"target column {target!r} has missing values")
    if task is None:
        kind, _ = classify(target_cells)
        task = REGRESSION if kind == NUMERIC else CLASSIFICATION
    classes = tuple(sorted(set(target_cells))) if task == CLASSIFICATION else ()
    return Schema(tuple(features), target, task, classes)


def encode_features(raw: RawTable, schema: Schema, stats: dict | None = None) -> Dataset:
    """Encode a raw table against a schema.

    Numeric columns are median-imputed and z-scored; categorical columns are
    one-hot with a trailing unknown slot.  When ``stats`` is None the
    imputation medians and standardization moments are fitted on this table
    and attached to the result for reuse on test/OOD data.
    """
    for col in schema.features:
        if col.name not in raw.header:
            raise ValueError(f"schema column {col.name!r} missing from header")
    if schema.target not in raw.header:
        raise ValueError(f"target column {schema.target!r} missing from header")
    if stats is not None:
        expected = {c.name for c in schema.features if c.kind == NUMERIC}
        if set(stats) != expected:
            raise ValueError("stats do not match the schema's numeric columns")

    n = len(raw.rows)
    if n < 1:
        raise ValueError("cannot encode an empty table")
    fitting = stats is None
    fitted: dict[str, dict[str, float]] = {}
    blocks: list[np.ndarray] = []

    for col in schema.features:
        j = raw.header.index(col.name)
        cells = [row[j] for row in raw.rows]
        if col.kind == NUMERIC:
            values = np.full(n, np.nan)
            for i, cell in enumerate(cells):
                if cell not in MISSING_TOKENS:
                    values[i] = _parse_number(cell, col.name, i + 2)
            if fitting:
                present = values[~np.isnan(values)]
                if present.size == 0:
                    raise FormatError(f"column {col.name!r} is entirely missing")
                median = float(np.median(present))
                values[np.isnan(values)] = median
                mean = float(values.mean())
                std = float(values.std())
                if std == 0.0:
                    std = 1.0  # constant column: leave it centred at zero
                fitted[col.name] = {"median": median, "mean": mean, "std": std}
            else:
                s = stats[col.name]
                values[np.isnan(values)] = s["median"]
                mean, std = s["mean"], s["std"]
            blocks.append(((values - mean) / std)[:, None])
        else:
            width = len(col.categories) + 1
            onehot = np.zeros((n, width))
            index = {c: k for k, c in enumerate(col.categories)}
            for i, cell in enumerate(cells):
                if cell in MISSING_TOKENS:
                    cell = MISSING_CATEGORY
                onehot[i, index.get(cell, width - 1)] = 1.0
            blocks.append(onehot)

    jt = raw.header.index(schema.target)
    if schema.task == CLASSIFICATION:
        lookup = {c: k for k, c in enumerate(schema.classes)}
        labels = np.empty(n, dtype=np.int64)
        for i, row in enumerate(raw.rows):
            cell = row[jt]
            if cell not in lookup:
                raise FormatError(f"row {i + 2}: unknown target class {cell!r}")
            labels[i] = lookup[cell]
    else:
        labels = np.array(
            [_parse_number(row[jt], schema.target, i + 2) for i, row in enumerate(raw.rows)]
        )

    features = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return Dataset(features, labels, schema, fitted if fitting else dict(stats))


def ingest_csv(
    path,
    schema: Schema | None = None,
    target: str | None = None,
    task: str | None = None,
    stats: dict | None = None,
    delimiter: str = ",",
    category_cutoff: int = DEFAULT_CATEGORY_CUTOFF,
) -> Dataset:
    """Read a CSV and encode it.  Infers the schema when none is given,
    which requires an explicit ``target`` column name."""
    raw = read_csv(path, delimiter=delimiter)
    if schema is None:
        schema = infer_schema(raw, target=target, task=task, category_cutoff=category_cutoff)
    return encode_features(raw, schema, stats=stats)


def split(dataset: Dataset, fractions, rng: RngStream) -> tuple[Dataset, Dataset]:
    """Deterministic two-way row split, stratified by class for classification.

    ``fractions`` are two positive proportions summing to 1.  Falls back to
    an unstratified split (with a warning) when some class has fewer rows
    than splits.
    """
    f = tuple(float(x) for x in fractions)
    if len(f) != 2 or any(x <= 0 for x in f) or abs(sum(f) - 1.0) > 1e-9:
        raise ValueError("fractions must be two positive values summing to 1")
    n = dataset.n

    stratify = dataset.schema.task == CLASSIFICATION
    if stratify:
        _, counts = np.unique(dataset.labels, return_counts=True)
        if counts.min() < 2:
            warnings.warn("a class has fewer rows than splits; splitting unstratified")
            stratify = False

    if stratify:
        first_idx: list[int] = []
        second_idx: list[int] = []
        for cls in np.unique(dataset.labels):
            rows = np.flatnonzero(dataset.labels == cls)
            order = rows[rng.permutation(rows.size)]
            k = int(round(f[0] * rows.size))
            k = min(max(k, 1), rows.size - 1)  # keep every class on both sides
            first_idx.extend(order[:k])
            second_idx.extend(order[k:])
        first = np.sort(np.asarray(first_idx, dtype=np.int64))
        second = np.sort(np.asarray(second_idx, dtype=np.int64))
    else:
        order = rng.permutation(n)
        k = int(round(f[0] * n))
        k = min(max(k, 1), n - 1)
        first = np.sort(order[:k])
        second = np.sort(order[k:])
    return dataset.take(first), dataset.take(second)


def _format_cell(v) -> str:
    return repr(float(v))


def _write_dataset_csv(dataset: Dataset, path) -> None:
    names = dataset.schema.encoded_names()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + [dataset.schema.target])
        classification = dataset.schema.task == CLASSIFICATION
        for i in range(dataset.n):
            row = [_format_cell(v) for v in dataset.features[i]]
            row.append(str(int(dataset.labels[i])) if classification else _format_cell(dataset.labels[i]))
            writer.writerow(row)


def _read_dataset_csv(path, schema: Schema, stats: dict | None) -> Dataset:
    raw = read_csv(path)
    expected = list(schema.encoded_names()) + [schema.target]
    if raw.header != expected:
        raise FormatError(f"{path}: header does not match the stored schema")
    n = len(raw.rows)
    if n == 0:
        raise FormatError(f"{path}: no data rows")
    d = len(expected) - 1
    features = np.empty((n, d))
    if schema.task == CLASSIFICATION:
        labels: np.ndarray = np.empty(n, dtype=np.int64)
    else:
        labels = np.empty(n)
    for i, row in enumerate(raw.rows):
        for j in range(d):
            features[i, j] = _parse_number(row[j], expected[j], i + 2)
        if schema.task == CLASSIFICATION:
            try:
                labels[i] = int(row[d])
            except ValueError:
                raise FormatError(f"{path}: row {i + 2}: bad class index {row[d]!r}") from None
        else:
            labels[i] = _parse_number(row[d], schema.target, i + 2)
    return Dataset(features, labels, schema, stats)


def save_dataset(dataset: Dataset, path) -> None:
    """Persist one dataset as ``<path>/data.csv`` plus ``<path>/meta.json``."""
    os.makedirs(path, exist_ok=True)
    _write_dataset_csv(dataset, os.path.join(path, "data.csv"))
    meta = {
        "schema-version": SCHEMA_VERSION,
        "schema": dataset.schema.to_dict(),
        "stats": dataset.stats,
    }
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)


def _load_meta(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: corrupt JSON sidecar: {exc}") from exc
    version = meta.get("schema-version")
    if version != SCHEMA_VERSION:
        raise FormatError(f"{path}: schema-version {version!r}, expected {SCHEMA_VERSION}")
    return meta


def load_dataset(path) -> Dataset:
    meta = _load_meta(os.path.join(path, "meta.json"))
    schema = Schema.from_dict(meta["schema"])
    return _read_dataset_csv(os.path.join(path, "data.csv"), schema, meta.get("stats"))


def save_split(pair: SplitPair, path) -> None:
    """Persist a split as two CSVs plus a JSON sidecar in one directory."""
    os.makedirs(path, exist_ok=True)
    _write_dataset_csv(pair.d_in, os.path.join(path, "d_in.csv"))
    _write_dataset_csv(pair.d_ood, os.path.join(path, "d_ood.csv"))
    meta = {
        "schema-version": SCHEMA_VERSION,
        "threshold": pair.threshold,
        "detector": pair.detector,
        "norm": pair.norm,
        "seed": pair.seed,
        "m": pair.m,
        "n": pair.n,
        "schema": pair.d_in.schema.to_dict(),
        "stats": pair.d_in.stats,
    }
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)


def load_split(path) -> SplitPair:
    """Inverse of :func:`save_split`; features, labels, threshold, and
    detector id round-trip bit-exactly."""
    meta = _load_meta(os.path.join(path, "meta.json"))
    schema = Schema.from_dict(meta["schema"])
    stats = meta.get("stats")
    d_in = _read_dataset_csv(os.path.join(path, "d_in.csv"), schema, stats)
    d_ood = _read_dataset_csv(os.path.join(path, "d_ood.csv"), schema, stats)
    pair = SplitPair(
        d_in,
        d_ood,
        threshold=float(meta["threshold"]),
        detector=str(meta["detector"]),
        norm=str(meta["norm"]),
        seed=meta.get("seed"),
    )
    if pair.m != meta["m"] or pair.n != meta["n"]:
        raise FormatError(f"{path}: row counts disagree with the sidecar")
    return pair
