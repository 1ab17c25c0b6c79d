"""Automatic featurization of ``(context, action)`` pairs.

Numeric columns are standardized with training mean and population std,
categorical columns are one-hot encoded over the training vocabulary and
the action is one-hot encoded over ``K``.  Nothing is learned from data
outside the fitting log.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import CATEGORICAL, NUMERIC, Context, FeatureSchema, InteractionLog, check_context
from ..errors import DataError, SchemaError

ACTION_COLUMN = "action"


@dataclass(frozen=True)
class Featurizer:
    schema: FeatureSchema
    K: int
    means: tuple[float, ...]  # one per numeric column, schema order
    stds: tuple[float, ...]
    vocabularies: tuple[tuple[str, ...], ...]  # one per categorical column, schema order

    @property
    def context_width(self) -> int:
        n_num = sum(1 for _, kind in self.schema if kind == NUMERIC)
        return n_num + sum(len(v) for v in self.vocabularies)

    @property
    def width(self) -> int:
        return self.context_width + self.K

    def column_slices(self) -> dict[str, slice]:
        """Design-matrix slice produced by each raw input column, action last."""
        out = {}
        start = 0
        cat = iter(self.vocabularies)
        for name, kind in self.schema:
            w = 1 if kind == NUMERIC else len(next(cat))
            out[name] = slice(start, start + w)
            start += w
        out[ACTION_COLUMN] = slice(start, start + self.K)
        return out

    def transform_contexts(self, contexts: Sequence[Context]) -> np.ndarray:
        """Encode contexts only (no action block), shape ``(n, context_width)``."""
        n = len(contexts)
        blocks = []
        num_i = cat_i = 0
        for col, (name, kind) in enumerate(self.schema):
            if kind == NUMERIC:
                try:
                    raw = np.fromiter((c[col] for c in contexts), dtype=float, count=n)
                except (TypeError, ValueError, IndexError) as exc:
                    raise SchemaError(f"column {name!r}: {exc}") from exc
                std = self.stds[num_i]
                mean = self.means[num_i]
                blocks.append(((raw - mean) / std if std > 0 else np.zeros(n))[:, None])
                num_i += 1
            else:
                vocab = self.vocabularies[cat_i]
                index = {tok: j for j, tok in enumerate(vocab)}
                onehot = np.zeros((n, len(vocab)))
                for r, c in enumerate(contexts):
                    j = index.get(c[col])
                    if j is not None:
                        onehot[r, j] = 1.0
                blocks.append(onehot)
                cat_i += 1
        if not blocks:
            return np.zeros((n, 0))
        return np.hstack(blocks)

    def with_actions(self, Z: np.ndarray, actions) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.int64)
        A = np.zeros((len(Z), self.K))
        A[np.arange(len(Z)), actions] = 1.0
        return np.hstack([Z, A])

    def transform(self, contexts: Sequence[Context], actions) -> np.ndarray:
        return self.with_actions(self.transform_contexts(contexts), actions)

    def check(self, context: Context) -> None:
        check_context(context, self.schema)

    def to_dict(self) -> dict:
        return {
            "schema": [list(c) for c in self.schema],
            "K": self.K,
            "means": list(self.means),
            "stds": list(self.stds),
            "vocabularies": [list(v) for v in self.vocabularies],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Featurizer":
        return cls(
            schema=tuple(tuple(c) for c in doc["schema"]),
            K=int(doc["K"]),
            means=tuple(doc["means"]),
            stds=tuple(doc["stds"]),
            vocabularies=tuple(tuple(v) for v in doc["vocabularies"]),
        )


def fit_featurizer(log: InteractionLog) -> Featurizer:
    if len(log) == 0:
        raise DataError("cannot fit a featurizer on an empty log")
    return fit_featurizer_on(log.contexts(), log.schema, log.K)


def fit_featurizer_on(contexts: Sequence[Context], schema: FeatureSchema, K: int) -> Featurizer:
    means, stds, vocabs = [], [], []
    for col, (name, kind) in enumerate(schema):
        if kind == NUMERIC:
            raw = np.fromiter((c[col] for c in contexts), dtype=float, count=len(contexts))
            means.append(float(raw.mean()))
            std = float(raw.std())
            # near-constant columns would blow up after division
            stds.append(std if std > 1e-12 * max(1.0, abs(means[-1])) else 0.0)
        elif kind == CATEGORICAL:
            vocabs.append(tuple(sorted({c[col] for c in contexts})))
        else:
            raise SchemaError(f"unknown column kind {kind!r}")
    return Featurizer(tuple(schema), int(K), tuple(means), tuple(stds), tuple(vocabs))
