"""Exploration schedules and action-selection rules.

Every selection consumes exactly two ``rng.random()`` draws, the
exploration coin first and the uniform arm draw second, whether or not
the step explores.  Traces therefore line up across policies that share
a seed.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .core import CATEGORICAL, NUMERIC, Context, FeatureSchema
from .errors import ActionError, ConfigError

SCHEDULE_KINDS = ("fixed", "inverse_n", "linear")


@dataclass(frozen=True)
class EpsilonSchedule:
    """Exploration rate as a function of episode ``t`` and block ``n`` (both 1-based).

    * ``fixed``: ``epsilon0``
    * ``inverse_n``: ``min(1, epsilon0 / n)``
    * ``linear``: ``epsilon0 * max(0, 1 - t / T_anneal)``
    """

    kind: str = "linear"
    epsilon0: float = 0.9
    T_anneal: int | None = None

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"schedule kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.epsilon0 <= 1.0:
            raise ConfigError(f"epsilon0 must be in [0, 1], got {self.epsilon0}")
        if self.kind == "linear" and self.T_anneal is not None and self.T_anneal < 1:
            raise ConfigError("T_anneal must be >= 1")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "epsilon0": self.epsilon0, "T_anneal": self.T_anneal}

    @classmethod
    def from_dict(cls, doc: dict) -> "EpsilonSchedule":
        T = doc.get("T_anneal")
        return cls(doc.get("kind", "linear"), float(doc.get("epsilon0", 0.9)), None if T is None else int(T))


def epsilon_at(sch: EpsilonSchedule, t: int, n: int = 1) -> float:
    if t < 1 or n < 1:
        raise ConfigError(f"t and n are 1-based, got t={t}, n={n}")
    if sch.kind == "fixed":
        return sch.epsilon0
    if sch.kind == "inverse_n":
        return min(1.0, sch.epsilon0 / n)
    if sch.T_anneal is None:
        raise ConfigError("linear schedule needs T_anneal")
    return sch.epsilon0 * max(0.0, 1.0 - t / sch.T_anneal)


def uniform_action(u: float, K: int) -> int:
    return min(int(u * K), K - 1)


def epsilon_greedy(q_values, epsilon: float, rng: np.random.Generator) -> tuple[int, bool]:
    """ε-greedy choice over a vector of predicted rewards; ties go to the lowest index."""
    coin = rng.random()
    u = rng.random()
    if coin < epsilon:
        return uniform_action(u, len(q_values)), True
    return int(np.argmax(q_values)), False


def select_action(q, s: Context, epsilon: float, K: int, rng: np.random.Generator) -> tuple[int, bool]:
    """ε-greedy over a fitted QModel.  ``q=None`` (no model yet) always explores."""
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError(f"epsilon must be in [0, 1], got {epsilon}")
    if q is None:
        return epsilon_greedy(np.zeros(K), 1.0, rng)
    return epsilon_greedy(q.q_values([s])[0], epsilon, rng)


def random_policy(K: int, rng: np.random.Generator) -> int:
    """Uniform arm; same draws and result as ``select_action`` with ε=1."""
    if K < 1:
        raise ActionError("K must be >= 1")
    rng.random()
    return uniform_action(rng.random(), K)


class OnlineLinearBaseline:
    """Per-action linear reward model trained by squared-loss SGD after every step.

    Numeric columns are optionally standardized with running statistics
    (updated after each SGD step); categorical tokens are hashed into
    ``hash_buckets`` indicator slots per column.
    """

    def __init__(
        self,
        schema: FeatureSchema,
        K: int,
        learning_rate: float = 0.1,
        schedule: EpsilonSchedule | None = None,
        normalize: bool = True,
        hash_buckets: int = 16,
    ):
        if learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        self.schema = tuple(schema)
        self.K = int(K)
        self.learning_rate = float(learning_rate)
        self.schedule = schedule or EpsilonSchedule("fixed", 0.1)
        self.normalize = normalize
        self.hash_buckets = int(hash_buckets)
        n_num = sum(1 for _, kind in self.schema if kind == NUMERIC)
        n_cat = sum(1 for _, kind in self.schema if kind == CATEGORICAL)
        self.dim = n_num + n_cat * self.hash_buckets
        self.weights = np.zeros((self.K, self.dim))
        self.intercepts = np.zeros(self.K)
        self._count = 0
        self._mean = np.zeros(n_num)
        self._m2 = np.zeros(n_num)

    def featurize(self, s: Context) -> np.ndarray:
        x = np.zeros(self.dim)
        num_i = 0
        pos = 0
        for value, (_, kind) in zip(s, self.schema):
            if kind == NUMERIC:
                v = float(value)
                if self.normalize:
                    std = math.sqrt(self._m2[num_i] / self._count) if self._count > 1 else 0.0
                    v = (v - self._mean[num_i]) / std if std > 0 else 0.0
                x[pos] = v
                num_i += 1
                pos += 1
            else:
                x[pos + zlib.crc32(str(value).encode()) % self.hash_buckets] = 1.0
                pos += self.hash_buckets
        return x

    def predict(self, s: Context) -> np.ndarray:
        return self.predict_x(self.featurize(s))

    def predict_x(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x + self.intercepts

    def _observe(self, s: Context) -> None:
        if not self.normalize or len(self._mean) == 0:
            return
        v = np.array([float(value) for value, (_, kind) in zip(s, self.schema) if kind == NUMERIC])
        self._count += 1
        delta = v - self._mean
        self._mean += delta / self._count
        self._m2 += delta * (v - self._mean)


def baseline_update(b: OnlineLinearBaseline, s: Context, a: int, r: float) -> OnlineLinearBaseline:
    """One SGD step on action ``a``; other actions are untouched.  Mutates and returns ``b``."""
    if not 0 <= a < b.K:
        raise ActionError(f"action {a} outside [0, {b.K})")
    x = b.featurize(s)
    err = r - (b.weights[a] @ x + b.intercepts[a])
    b.weights[a] += b.learning_rate * err * x
    b.intercepts[a] += b.learning_rate * err
    b._observe(s)
    return b
