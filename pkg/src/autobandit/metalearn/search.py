"""Candidate search, cross-validated selection and top-k ensembling.

The whole pipeline is deterministic given the log contents and the budget
seed: every candidate is scored on the same seeded fold assignment and the
ranking is broken by grid position, so parallel scoring cannot reorder it.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import Context, InteractionLog
from ..errors import ConfigError, DataError, IoError, SchemaError
from .featurize import Featurizer, fit_featurizer
from .models import CandidateSpec, candidate_grid, check_xy, make_model, model_from_params

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchBudget:
    max_candidates: int = 13
    cv_folds: int = 5
    holdout_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.max_candidates < 1:
            raise ConfigError("max_candidates must be >= 1")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must be in [0, 1)")


@dataclass
class ModelArtifact:
    candidate: CandidateSpec
    model: object = field(repr=False)
    cv_mae: float = float("nan")
    grid_index: int = 0

    def predict(self, X) -> np.ndarray:
        return self.model.predict(X)


def mae(pred, y) -> float:
    return float(np.mean(np.abs(np.asarray(pred, dtype=float) - np.asarray(y, dtype=float))))


def fit_candidate(c: CandidateSpec, X, y) -> ModelArtifact:
    X, y = check_xy(X, y)
    return ModelArtifact(c, make_model(c).fit(X, y))


def cross_validate(c: CandidateSpec, X, y, folds: int, rng: np.random.Generator) -> float:
    """Mean over folds of the held-out MAE.

    One ``rng.permutation`` shuffles the rows, which are then cut into
    ``folds`` contiguous chunks.  Predictions are clipped to ``[0, 1]``
    before scoring, as the deployed Q-function would be.
    """
    X, y = check_xy(X, y)
    if folds < 2:
        raise ConfigError("need at least two folds")
    if len(y) < folds:
        raise DataError(f"{len(y)} rows cannot fill {folds} folds")
    perm = rng.permutation(len(y))
    scores = []
    for test in np.array_split(perm, folds):
        train = np.setdiff1d(perm, test, assume_unique=True)
        model = make_model(c).fit(X[train], y[train])
        scores.append(mae(np.clip(model.predict(X[test]), 0.0, 1.0), y[test]))
    return float(np.mean(scores))


def search(
    log: InteractionLog,
    budget: SearchBudget,
    featurizer: Featurizer | None = None,
    workers: int = 1,
) -> list[ModelArtifact]:
    """Score candidates by cross-validated MAE and fit them on the full log.

    Returns artifacts sorted by ``(cv_mae, grid position)``.
    """
    if len(log) < 2 * budget.cv_folds:
        raise DataError(f"search needs >= {2 * budget.cv_folds} episodes, log has {len(log)}")
    featurizer = featurizer or fit_featurizer(log)
    X = featurizer.transform(log.contexts(), log.actions())
    y = log.rewards()
    return search_matrix(X, y, budget, workers=workers)


def search_matrix(X, y, budget: SearchBudget, workers: int = 1) -> list[ModelArtifact]:
    X, y = check_xy(X, y)
    grid = candidate_grid()
    rng = np.random.default_rng(budget.seed)
    if budget.max_candidates < len(grid):
        chosen = sorted(rng.choice(len(grid), size=budget.max_candidates, replace=False).tolist())
    else:
        chosen = list(range(len(grid)))
    fold_seed = int(rng.integers(2**63))

    def evaluate(i: int) -> ModelArtifact:
        c = grid[i]
        score = cross_validate(c, X, y, budget.cv_folds, np.random.default_rng(fold_seed))
        art = fit_candidate(c, X, y)
        art.cv_mae = score
        art.grid_index = i
        return art

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            arts = list(pool.map(evaluate, chosen))
    else:
        arts = [evaluate(i) for i in chosen]
    arts.sort(key=lambda a: (a.cv_mae, a.grid_index))
    logger.debug("search ranking: %s", [(a.candidate.label(), round(a.cv_mae, 5)) for a in arts])
    return arts


@dataclass(frozen=True)
class QModel:
    """Ensemble estimate of the expected reward of an action in a context."""

    featurizer: Featurizer
    members: tuple[ModelArtifact, ...]
    k: int

    @property
    def K(self) -> int:
        return self.featurizer.K

    def predict_matrix(self, X) -> np.ndarray:
        preds = np.mean([m.predict(X) for m in self.members], axis=0)
        return np.clip(preds, 0.0, 1.0)

    def predict(self, contexts: Sequence[Context], actions) -> np.ndarray:
        return self.predict_matrix(self.featurizer.transform(contexts, actions))

    def q_values(self, contexts: Sequence[Context]) -> np.ndarray:
        """Predicted reward of every action for every context, shape ``(n, K)``."""
        Z = self.featurizer.transform_contexts(contexts)
        n = len(Z)
        cols = [self.predict_matrix(self.featurizer.with_actions(Z, np.full(n, a))) for a in range(self.K)]
        return np.column_stack(cols) if cols else np.zeros((n, 0))

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "featurizer": self.featurizer.to_dict(),
            "members": [
                {
                    "family": m.candidate.family,
                    "hyperparams": m.candidate.hyperparams,
                    "cv_mae": m.cv_mae,
                    "grid_index": m.grid_index,
                    "params": m.model.get_params(),
                }
                for m in self.members
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "QModel":
        members = []
        for m in doc["members"]:
            spec = CandidateSpec(m["family"], **m["hyperparams"])
            members.append(ModelArtifact(spec, model_from_params(spec, m["params"]),
                                         float(m["cv_mae"]), int(m.get("grid_index", 0))))
        return cls(Featurizer.from_dict(doc["featurizer"]), tuple(members), int(doc["k"]))


def build_qmodel(ranked: Sequence[ModelArtifact], featurizer: Featurizer, k: int = 3) -> QModel:
    if k < 1:
        raise ConfigError("ensemble size k must be >= 1")
    if not ranked:
        raise ConfigError("cannot build a QModel from an empty ranking")
    members = tuple(sorted(ranked, key=lambda a: (a.cv_mae, a.grid_index))[:k])
    return QModel(featurizer, members, k)


def predict_q(q: QModel, s: Context, a: int) -> float:
    q.featurizer.check(s)
    if not 0 <= a < q.K:
        raise SchemaError(f"action {a} outside [0, {q.K})")
    return float(q.predict([s], [a])[0])


def train_holdout_split(n: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random ``(train, holdout)`` index split; holdout is ``round(fraction * n)`` rows."""
    perm = rng.permutation(n)
    n_hold = int(round(fraction * n))
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def fit_qmodel(log: InteractionLog, budget: SearchBudget, k: int = 3, workers: int = 1) -> QModel:
    featurizer = fit_featurizer(log)
    return build_qmodel(search(log, budget, featurizer, workers=workers), featurizer, k)


def heldout_mae(q: QModel, log: InteractionLog) -> float:
    return mae(q.predict(log.contexts(), log.actions()), log.rewards())


def feature_importance(
    q: QModel,
    eval_log: InteractionLog,
    rng: np.random.Generator,
    n_repeats: int = 5,
) -> dict[str, float]:
    """Permutation importance: mean MAE increase when one raw column is shuffled.

    Columns are visited in schema order with ``action`` last, and each
    repeat consumes one ``rng.permutation(n)``.  A categorical column or the
    action is shuffled as a whole, so its one-hot block gets a single score.
    """
    if len(eval_log) == 0:
        raise DataError("feature importance needs a nonempty evaluation set")
    X = q.featurizer.transform(eval_log.contexts(), eval_log.actions())
    y = eval_log.rewards()
    base = mae(q.predict_matrix(X), y)
    scores = {}
    for name, sl in q.featurizer.column_slices().items():
        increases = []
        for _ in range(n_repeats):
            perm = rng.permutation(len(y))
            Xp = X.copy()
            Xp[:, sl] = X[perm, sl]
            increases.append(mae(q.predict_matrix(Xp), y) - base)
        scores[name] = float(np.mean(increases))
    return scores


def save_qmodel(q: QModel, path) -> None:
    try:
        Path(path).write_text(json.dumps(q.to_dict()) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_qmodel(path) -> QModel:
    try:
        return QModel.from_dict(json.loads(Path(path).read_text()))
    except OSError as exc:
        raise IoError(str(exc)) from exc

