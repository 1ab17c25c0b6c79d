"""Supervised classification datasets replayed as bandit problems.

Each class label is an arm.  Choosing the hidden label pays 1, anything
else pays 0, and only the chosen arm's payoff is revealed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .core import CATEGORICAL, NUMERIC, Context, FeatureSchema
from .errors import ActionError, ConfigError, IoError, ParseError, SchemaError

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "?"})
BUILTIN_DATASETS = ("fixture",)


@dataclass(frozen=True)
class DatasetSchema:
    columns: tuple[tuple[str, str], ...]
    label_column: str
    classes: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple((str(n), str(k)) for n, k in self.columns))
        object.__setattr__(self, "classes", tuple(str(c) for c in self.classes))
        names = [n for n, _ in self.columns]
        if self.label_column in names:
            raise SchemaError(f"label column {self.label_column!r} is also a feature column")
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature column names")
        for name, kind in self.columns:
            if kind not in (NUMERIC, CATEGORICAL):
                raise SchemaError(f"column {name!r} has unknown kind {kind!r}")
        if len(self.classes) < 2 or len(set(self.classes)) != len(self.classes):
            raise SchemaError(f"need at least two distinct classes, got {self.classes}")

    @property
    def K(self) -> int:
        return len(self.classes)

    @property
    def feature_schema(self) -> FeatureSchema:
        return self.columns

    def to_dict(self) -> dict:
        return {
            "columns": [{"name": n, "kind": k} for n, k in self.columns],
            "label_column": self.label_column,
            "classes": list(self.classes),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetSchema":
        try:
            return cls(
                columns=tuple((c["name"], c["kind"]) for c in doc["columns"]),
                label_column=doc["label_column"],
                classes=tuple(doc["classes"]),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed dataset schema: {exc!r}") from exc


@dataclass(frozen=True)
class SupervisedDataset:
    schema: DatasetSchema
    contexts: tuple[Context, ...]
    labels: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class BanditStream:
    """Shuffled replay order of a dataset.  ``labels`` must stay hidden from policies."""

    schema: DatasetSchema
    contexts: tuple[Context, ...]
    labels: tuple[int, ...]
    shuffle_seed: int

    def __len__(self) -> int:
        return len(self.labels)


def load_schema(path) -> DatasetSchema:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    return DatasetSchema.from_dict(doc)


def load_csv(path, schema: DatasetSchema) -> SupervisedDataset:
    """Read a headered CSV into typed rows.

    Rows containing an empty or ``?`` cell are dropped and counted in the log.
    Row numbers in errors are 1-based file lines (the header is line 1).
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    class_index = {c: i for i, c in enumerate(schema.classes)}
    contexts: list[Context] = []
    labels: list[int] = []
    dropped = 0
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path} is empty")
        header = [h.strip() for h in header]
        wanted = [n for n, _ in schema.columns] + [schema.label_column]
        if sorted(header) != sorted(wanted):
            raise SchemaError(f"header {header} does not match schema columns {wanted}")
        pos = {name: header.index(name) for name in wanted}
        label_pos = pos[schema.label_column]
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(line_no, "*", ",".join(row))
            cells = [c.strip() for c in row]
            if any(c in MISSING_TOKENS for c in cells):
                dropped += 1
                continue
            values = []
            for name, kind in schema.columns:
                raw = cells[pos[name]]
                if kind == NUMERIC:
                    try:
                        v = float(raw)
                    except ValueError:
                        raise ParseError(line_no, name, raw) from None
                    if not math.isfinite(v):
                        raise ParseError(line_no, name, raw)
                    values.append(v)
                else:
                    values.append(raw)
            token = cells[label_pos]
            if token not in class_index:
                raise SchemaError(f"line {line_no}: label {token!r} not in classes {schema.classes}")
            contexts.append(tuple(values))
            labels.append(class_index[token])
    if dropped:
        logger.info("%s: dropped %d rows with missing values", path, dropped)
    return SupervisedDataset(schema, tuple(contexts), tuple(labels))


def builtin_paths(name: str) -> tuple[Path, Path]:
    """``(csv, schema)`` paths of a dataset bundled with the package."""
    if name not in BUILTIN_DATASETS:
        raise ConfigError(f"unknown builtin dataset {name!r}; have {BUILTIN_DATASETS}")
    root = resources.files("autobandit") / "data"
    return Path(str(root / f"{name}.csv")), Path(str(root / f"{name}_schema.json"))


def load_builtin(name: str = "fixture") -> SupervisedDataset:
    csv_path, schema_path = builtin_paths(name)
    return load_csv(csv_path, load_schema(schema_path))


def fisher_yates(n: int, rng: np.random.Generator) -> list[int]:
    """Permutation of ``range(n)``.

    For ``i = n-1 .. 1`` swap position ``i`` with ``j = floor(u * (i + 1))``,
    one ``rng.random()`` draw per step.
    """
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.random() * (i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def to_bandit(ds: SupervisedDataset, shuffle_seed: int) -> BanditStream:
    if len(ds) == 0:
        raise ConfigError("cannot build a bandit stream from an empty dataset")
    order = fisher_yates(len(ds), np.random.default_rng(shuffle_seed))
    return BanditStream(
        ds.schema,
        tuple(ds.contexts[i] for i in order),
        tuple(ds.labels[i] for i in order),
        shuffle_seed,
    )


def pull_label(hidden_label: int, a: int, K: int | None = None) -> float:
    if a < 0 or (K is not None and a >= K):
        raise ActionError(f"action {a} outside [0, {K})")
    return 1.0 if a == hidden_label else 0.0

