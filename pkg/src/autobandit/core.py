"""Interaction records and regret accounting.

A context is a plain tuple of feature values: ``float`` for numeric
columns and ``str`` for categorical ones.  The column layout lives in a
:data:`FeatureSchema`, a tuple of ``(name, kind)`` pairs shared by every
episode of a log.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import ActionError, IoError, LengthError, SchemaError

NUMERIC = "numeric"
CATEGORICAL = "categorical"

Value = Union[float, str]
Context = tuple  # tuple[Value, ...]
FeatureSchema = tuple  # tuple[tuple[str, str], ...]


def numeric_schema(d: int) -> FeatureSchema:
    return tuple((f"f{i}", NUMERIC) for i in range(d))


def check_context(context: Sequence[Value], schema: FeatureSchema) -> None:
    """Raise :class:`SchemaError` unless ``context`` conforms to ``schema``."""
    if len(context) != len(schema):
        raise SchemaError(f"context has {len(context)} values, schema has {len(schema)} columns")
    for value, (name, kind) in zip(context, schema):
        if kind == NUMERIC:
            if isinstance(value, (str, bytes)) or isinstance(value, bool):
                raise SchemaError(f"column {name!r} is numeric, got {value!r}")
            if not math.isfinite(float(value)):
                raise SchemaError(f"column {name!r} has non-finite value {value!r}")
        elif kind == CATEGORICAL:
            if not isinstance(value, str):
                raise SchemaError(f"column {name!r} is categorical, got {value!r}")
        else:
            raise SchemaError(f"unknown column kind {kind!r} for {name!r}")


@dataclass(frozen=True, slots=True)
class Episode:
    t: int
    context: Context
    action: int
    reward: float
    epsilon_used: float = 0.0
    explored: bool = False


class InteractionLog:
    """Append-only record of ``(context, action, reward)`` triples.

    Parameters
    ----------
    schema : FeatureSchema
        Column names and kinds every context must follow.
    K : int
        Number of actions.
    """

    def __init__(self, schema: FeatureSchema, K: int, episodes: Iterable[Episode] = ()):
        if K < 1:
            raise ActionError(f"K must be >= 1, got {K}")
        self.schema = tuple(tuple(c) for c in schema)
        self.K = int(K)
        self._episodes: list[Episode] = []
        for e in episodes:
            append_episode(self, e)

    def __len__(self) -> int:
        return len(self._episodes)

    def __iter__(self) -> Iterator[Episode]:
        return iter(self._episodes)

    def __getitem__(self, i):
        return self._episodes[i]

    @property
    def episodes(self) -> tuple[Episode, ...]:
        return tuple(self._episodes)

    def contexts(self) -> list[Context]:
        return [e.context for e in self._episodes]

    def actions(self) -> np.ndarray:
        return np.fromiter((e.action for e in self._episodes), dtype=np.int64, count=len(self))

    def rewards(self) -> np.ndarray:
        return np.fromiter((e.reward for e in self._episodes), dtype=float, count=len(self))

    def subset(self, indices: Iterable[int]) -> "InteractionLog":
        """Copy of the selected episodes, renumbered ``t = 1..m``."""
        out = InteractionLog(self.schema, self.K)
        for new_t, i in enumerate(indices, start=1):
            e = self._episodes[int(i)]
            out._episodes.append(Episode(new_t, e.context, e.action, e.reward, e.epsilon_used, e.explored))
        return out

    def extend(self, other: "InteractionLog") -> "InteractionLog":
        """Append every episode of ``other`` with ``t`` shifted to follow this log."""
        if other.schema != self.schema or other.K != self.K:
            raise SchemaError("cannot merge logs with different schema or action count")
        for e in other:
            append_episode(
                self, Episode(len(self) + 1, e.context, e.action, e.reward, e.epsilon_used, e.explored)
            )
        return self


def append_episode(log: InteractionLog, e: Episode) -> InteractionLog:
    """Append ``e`` to ``log`` in place and return the log."""
    check_context(e.context, log.schema)
    if not 0 <= e.action < log.K:
        raise ActionError(f"action {e.action} outside [0, {log.K})")
    if e.t != len(log) + 1:
        raise SchemaError(f"episode t={e.t} does not follow log of length {len(log)}")
    if not 0.0 <= e.reward <= 1.0:
        raise SchemaError(f"reward {e.reward} outside [0, 1]")
    log._episodes.append(e)
    return log


@dataclass(frozen=True)
class RegretSeries:
    per_step_regret: np.ndarray
    cumulative_regret: np.ndarray
    average_regret: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.per_step_regret)

    @classmethod
    def from_per_step(cls, per_step: Sequence[float]) -> "RegretSeries":
        per_step = np.asarray(per_step, dtype=float)
        cumulative = np.cumsum(per_step)
        average = cumulative / np.arange(1, len(per_step) + 1)
        return cls(per_step, cumulative, average)


def compute_regret(log: InteractionLog, oracle_values: Sequence[tuple[float, float]]) -> RegretSeries:
    """Regret of the logged actions against a pointwise-optimal comparator.

    ``oracle_values[i]`` is ``(best_value, taken_value)`` for episode ``i``:
    the expected reward of the best action and of the action actually taken
    (or the realized reward, for label environments).
    """
    if len(oracle_values) != len(log):
        raise LengthError(f"{len(oracle_values)} oracle values for {len(log)} episodes")
    pairs = np.asarray(oracle_values, dtype=float).reshape(len(log), 2)
    return RegretSeries.from_per_step(pairs[:, 0] - pairs[:, 1])


# CSV layout: t,action,reward,epsilon,explored,<feature columns...>
_LOG_HEADER = ("t", "action", "reward", "epsilon", "explored")


def write_log_csv(log: InteractionLog, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
            w.writerow(_LOG_HEADER + tuple(name for name, _ in log.schema))
            for e in log:
                feats = ['"' + v.replace('"', '""') + '"' if isinstance(v, str) else repr(float(v)) for v in e.context]
                fh.write(",".join(
                    [str(e.t), str(e.action), repr(float(e.reward)), repr(float(e.epsilon_used)),
                     str(int(e.explored))] + feats) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_log_csv(path, schema: FeatureSchema, K: int) -> InteractionLog:
    """Inverse of :func:`write_log_csv`; the schema decides how features parse."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    log = InteractionLog(schema, K)
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = list(_LOG_HEADER) + [name for name, _ in schema]
        if header != expected:
            raise SchemaError(f"log header {header} != {expected}")
        for row in reader:
            ctx = tuple(v if kind == CATEGORICAL else float(v) for v, (_, kind) in zip(row[5:], schema))
            append_episode(log, Episode(int(row[0]), ctx, int(row[1]), float(row[2]),
                                        float(row[3]), bool(int(row[4]))))
    return log
