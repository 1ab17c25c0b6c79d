"""Automated Q-function fitting: featurize, search, select, ensemble."""

from .featurize import ACTION_COLUMN, Featurizer, fit_featurizer
from .models import CandidateSpec, candidate_grid
from .search import (
    ModelArtifact,
    QModel,
    SearchBudget,
    build_qmodel,
    cross_validate,
    feature_importance,
    fit_candidate,
    fit_qmodel,
    heldout_mae,
    load_qmodel,
    predict_q,
    save_qmodel,
    search,
    train_holdout_split,
)
