"""The three regressor families searched over: constant, ridge, CART tree."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError

FAMILIES = ("constant", "ridge", "tree")
RIDGE_LAMBDAS = (0.01, 0.1, 1.0, 10.0)
TREE_DEPTHS = (2, 4, 6, 8)
TREE_MIN_LEAFS = (5, 20)


@dataclass(frozen=True, order=True)
class CandidateSpec:
    family: str
    lam: float | None = None
    max_depth: int | None = None
    min_leaf: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.family == "ridge" and (self.lam is None or self.lam < 0):
            raise ConfigError("ridge needs lam >= 0")
        if self.family == "tree" and (self.max_depth is None or self.max_depth < 0
                                      or self.min_leaf is None or self.min_leaf < 1):
            raise ConfigError("tree needs max_depth >= 0 and min_leaf >= 1")

    @property
    def hyperparams(self) -> dict:
        if self.family == "ridge":
            return {"lam": self.lam}
        if self.family == "tree":
            return {"max_depth": self.max_depth, "min_leaf": self.min_leaf}
        return {}

    def label(self) -> str:
        hp = ",".join(f"{k}={v}" for k, v in self.hyperparams.items())
        return f"{self.family}({hp})"


def candidate_grid() -> list[CandidateSpec]:
    """All 13 candidates, simplest first."""
    grid = [CandidateSpec("constant")]
    grid += [CandidateSpec("ridge", lam=lam) for lam in RIDGE_LAMBDAS]
    grid += [
        CandidateSpec("tree", max_depth=depth, min_leaf=leaf)
        for depth in TREE_DEPTHS
        for leaf in TREE_MIN_LEAFS
    ]
    return grid


class ConstantModel:
    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def fit(self, X, y):
        self.value = float(np.mean(y))
        return self

    def predict(self, X):
        return np.full(len(X), self.value)

    def get_params(self) -> dict:
        return {"value": self.value}

    @classmethod
    def from_params(cls, spec, params):
        return cls(params["value"])


class RidgeModel:
    r"""L2-penalized least squares with an unpenalized intercept.

    Solves :math:`\min_{w,b} \|Xw + b - y\|^2 + \lambda \|w\|^2` by centering
    ``X`` and ``y`` and solving the normal equations
    :math:`(X_c^\top X_c + \lambda I) w = X_c^\top y_c`.
    """

    def __init__(self, lam: float):
        self.lam = float(lam)
        self.coef = None
        self.intercept = 0.0

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        x_mean = X.mean(axis=0)
        y_mean = float(y.mean())
        Xc = X - x_mean
        A = Xc.T @ Xc + self.lam * np.eye(X.shape[1])
        b = Xc.T @ (y - y_mean)
        try:
            w = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            w = np.linalg.lstsq(A, b, rcond=None)[0]
        self.coef = w
        self.intercept = y_mean - float(x_mean @ w)
        return self

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.coef + self.intercept

    def get_params(self) -> dict:
        return {"coef": self.coef.tolist(), "intercept": self.intercept}

    @classmethod
    def from_params(cls, spec, params):
        m = cls(spec.lam)
        m.coef = np.asarray(params["coef"], dtype=float)
        m.intercept = float(params["intercept"])
        return m


class TreeModel:
    """Greedy CART regression tree on squared error.

    Nodes are stored in flat arrays; ``feature[i] == -1`` marks a leaf.
    Samples with ``x[feature] <= threshold`` go left.  Among equally good
    splits the lowest feature index and the lowest threshold win.
    """

    def __init__(self, max_depth: int, min_leaf: int):
        self.max_depth = int(max_depth)
        self.min_leaf = int(min_leaf)

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self._feature, self._threshold, self._left, self._right, self._value = [], [], [], [], []
        self._grow(X, y, np.arange(len(y)), 0)
        self.feature = np.asarray(self._feature, dtype=np.int64)
        self.threshold = np.asarray(self._threshold, dtype=float)
        self.left = np.asarray(self._left, dtype=np.int64)
        self.right = np.asarray(self._right, dtype=np.int64)
        self.value = np.asarray(self._value, dtype=float)
        del self._feature, self._threshold, self._left, self._right, self._value
        return self

    def _new_node(self, value):
        self._feature.append(-1)
        self._threshold.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._value.append(float(value))
        return len(self._value) - 1

    def _grow(self, X, y, idx, depth):
        ys = y[idx]
        node = self._new_node(ys.mean())
        if depth >= self.max_depth or len(idx) < 2 * self.min_leaf:
            return node
        split = best_split(X[idx], ys, self.min_leaf)
        if split is None:
            return node
        feat, thr = split
        go_left = X[idx, feat] <= thr
        self._feature[node] = feat
        self._threshold[node] = thr
        self._left[node] = self._grow(X, y, idx[go_left], depth + 1)
        self._right[node] = self._grow(X, y, idx[~go_left], depth + 1)
        return node

    def apply(self, X) -> np.ndarray:
        """Index of the leaf each row lands in."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return node
            r = rows[inner]
            n = node[inner]
            go_left = X[r, feat[inner]] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X):
        return self.value[self.apply(X)]

    def depth(self) -> int:
        depths = np.zeros(len(self.feature), dtype=np.int64)
        for i in range(len(self.feature)):  # children always follow their parent
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def get_params(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_params(cls, spec, params):
        m = cls(spec.max_depth, spec.min_leaf)
        m.feature = np.asarray(params["feature"], dtype=np.int64)
        m.threshold = np.asarray(params["threshold"], dtype=float)
        m.left = np.asarray(params["left"], dtype=np.int64)
        m.right = np.asarray(params["right"], dtype=np.int64)
        m.value = np.asarray(params["value"], dtype=float)
        return m


def best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Return ``(feature, threshold)`` minimizing the children's summed SSE, or None.

    Only splits between distinct feature values that leave at least
    ``min_leaf`` samples on each side and strictly reduce the SSE.
    """
    n = len(y)
    total = y.sum()
    total_sq = (y * y).sum()
    parent_sse = total_sq - total * total / n
    best = (np.inf, -1, 0.0)
    lo, hi = min_leaf - 1, n - min_leaf - 1  # left child = first i+1 sorted samples
    if hi < lo:
        return None
    n_left = np.arange(lo, hi + 1) + 1.0
    n_right = n - n_left
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        cs = np.cumsum(ys)[lo:hi + 1]
        cs2 = np.cumsum(ys * ys)[lo:hi + 1]
        sse = (cs2 - cs * cs / n_left) + ((total_sq - cs2) - (total - cs) ** 2 / n_right)
        valid = xs[lo:hi + 1] < xs[lo + 1:hi + 2]
        if not valid.any():
            continue
        sse = np.where(valid, sse, np.inf)
        i = int(np.argmin(sse))
        if sse[i] < best[0]:
            a, b = xs[lo + i], xs[lo + i + 1]
            thr = 0.5 * (a + b)
            if not a <= thr < b:
                thr = a
            best = (float(sse[i]), f, float(thr))
    sse, feat, thr = best
    if feat < 0 or not sse < parent_sse - 1e-12 * max(1.0, abs(parent_sse)):
        return None
    return feat, thr


def make_model(spec: CandidateSpec):
    if spec.family == "constant":
        return ConstantModel()
    if spec.family == "ridge":
        return RidgeModel(spec.lam)
    return TreeModel(spec.max_depth, spec.min_leaf)


def model_from_params(spec: CandidateSpec, params: dict):
    cls = {"constant": ConstantModel, "ridge": RidgeModel, "tree": TreeModel}[spec.family]
    return cls.from_params(spec, params)


def check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y) or len(y) < 1:
        raise DataError(f"design matrix shape {X.shape} incompatible with {len(y)} targets")
    return X, y
