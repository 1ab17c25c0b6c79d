"""Gaussian-factor synthetic environment.

Each action ``a`` owns a list of isotropic Gaussian bumps over the unit
box ``[0, 1]^d``.  Its reward probability at context ``s`` is::

    p_a(s) = clip(base_a + sum_f w_f * exp(-|s - mu_f|^2 / (2 sigma_f^2)), 0, 1)

Contexts are uniform on the box and independent across steps.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Context, FeatureSchema, numeric_schema
from .errors import ConfigError, IoError, SchemaError


@dataclass(frozen=True)
class GaussianFactor:
    mu: tuple[float, ...]
    sigma: float
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))
        if not self.sigma > 0:
            raise ConfigError(f"factor sigma must be > 0, got {self.sigma}")
        if not 0.0 <= self.weight <= 1.0:
            raise ConfigError(f"factor weight must be in [0, 1], got {self.weight}")


@dataclass(frozen=True)
class SyntheticEnvSpec:
    """Immutable description of a synthetic environment.

    ``factors[a]`` is the tuple of bumps for action ``a``.  ``base_prob`` is
    either a scalar shared by all actions or one value per action.
    """

    d: int
    K: int
    factors: tuple[tuple[GaussianFactor, ...], ...]
    noise_std: float = 0.0
    base_prob: float | tuple[float, ...] = 0.0
    seed: int = 0
    schema: FeatureSchema = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 1 or self.K < 1:
            raise ConfigError(f"need d >= 1 and K >= 1, got d={self.d}, K={self.K}")
        factors = tuple(tuple(fs) for fs in self.factors)
        if len(factors) != self.K:
            raise ConfigError(f"{len(factors)} factor lists for K={self.K} actions")
        for fs in factors:
            for f in fs:
                if len(f.mu) != self.d:
                    raise ConfigError(f"factor mean has length {len(f.mu)}, expected d={self.d}")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        base = self.base_prob
        if not np.isscalar(base):
            base = tuple(float(b) for b in base)
            if len(base) != self.K:
                raise ConfigError(f"base_prob has {len(base)} entries for K={self.K}")
        else:
            base = float(base)
        if not np.all((np.asarray(base) >= 0) & (np.asarray(base) <= 1)):
            raise ConfigError("base_prob must lie in [0, 1]")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "base_prob", base)
        object.__setattr__(self, "schema", numeric_schema(self.d))

    @property
    def base_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.base_prob, dtype=float), (self.K,))

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "K": self.K,
            "base_prob": list(self.base_prob) if isinstance(self.base_prob, tuple) else self.base_prob,
            "noise_std": self.noise_std,
            "seed": self.seed,
            "factors": [
                [{"mu": list(f.mu), "sigma": f.sigma, "weight": f.weight} for f in fs]
                for fs in self.factors
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticEnvSpec":
        try:
            factors = tuple(
                tuple(GaussianFactor(tuple(f["mu"]), float(f["sigma"]), float(f["weight"])) for f in fs)
                for fs in doc["factors"]
            )
            base = doc.get("base_prob", 0.0)
            return cls(
                d=int(doc["d"]),
                K=int(doc["K"]),
                factors=factors,
                noise_std=float(doc.get("noise_std", 0.0)),
                base_prob=tuple(base) if isinstance(base, list) else float(base),
                seed=int(doc.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed environment document: {exc!r}") from exc


def constant_spec(probs: Sequence[float], d: int = 1, seed: int = 0) -> SyntheticEnvSpec:
    """Environment whose reward probabilities ignore the context."""
    return SyntheticEnvSpec(d=d, K=len(probs), factors=((),) * len(probs), base_prob=tuple(probs), seed=seed)


def generate_spec(
    d: int,
    K: int,
    F: int,
    sigma_range: tuple[float, float] = (0.1, 0.3),
    noise_std: float = 0.0,
    seed: int = 0,
    base_prob: float = 0.0,
) -> SyntheticEnvSpec:
    """Draw a random environment with ``F`` factors per action.

    Means are uniform on ``[0, 1]^d``, widths uniform on ``sigma_range`` and
    weights uniform on ``[0, 1]``.  The result depends only on the arguments.
    """
    if d < 1 or K < 1 or F < 1:
        raise ConfigError(f"d, K, F must be >= 1, got {d}, {K}, {F}")
    lo, hi = sigma_range
    if not 0 < lo <= hi:
        raise ConfigError(f"sigma_range must satisfy 0 < lo <= hi, got {sigma_range}")
    rng = np.random.default_rng(seed)
    factors = []
    for _ in range(K):
        fs = []
        for _ in range(F):
            mu = rng.random(d)
            sigma = rng.uniform(lo, hi)
            weight = rng.random()
            fs.append(GaussianFactor(tuple(mu.tolist()), float(sigma), float(weight)))
        factors.append(tuple(fs))
    return SyntheticEnvSpec(d=d, K=K, factors=tuple(factors), noise_std=noise_std, base_prob=base_prob, seed=seed)


def sample_context(spec: SyntheticEnvSpec, rng: np.random.Generator) -> Context:
    return tuple(rng.random(spec.d).tolist())


def sample_contexts(spec: SyntheticEnvSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` contexts as an ``(n, d)`` array; same stream as ``n`` calls to :func:`sample_context`."""
    return rng.random((n, spec.d))


def _as_points(spec: SyntheticEnvSpec, s) -> np.ndarray:
    pts = np.asarray(s, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != spec.d:
        raise SchemaError(f"context dimension {pts.shape[-1]} does not match d={spec.d}")
    return pts


def reward_probabilities(spec: SyntheticEnvSpec, contexts) -> np.ndarray:
    """Reward probability of every action at every context, shape ``(n, K)``."""
    pts = _as_points(spec, contexts)
    out = np.tile(spec.base_vector, (len(pts), 1))
    for a, fs in enumerate(spec.factors):
        for f in fs:
            sq = np.sum((pts - np.asarray(f.mu)) ** 2, axis=1)
            out[:, a] += f.weight * np.exp(-sq / (2.0 * f.sigma**2))
    return np.clip(out, 0.0, 1.0)


def reward_probability(spec: SyntheticEnvSpec, s: Context, a: int) -> float:
    if not 0 <= a < spec.K:
        raise SchemaError(f"action {a} outside [0, {spec.K})")
    return float(reward_probabilities(spec, s)[0, a])


def pull(spec: SyntheticEnvSpec, s: Context, a: int, rng: np.random.Generator) -> float:
    """Bernoulli reward for action ``a``.

    Draws exactly one standard normal (parameter noise) and then one uniform.
    """
    return pull_with_probability(reward_probability(spec, s, a), spec.noise_std, rng)


def pull_with_probability(p: float, noise_std: float, rng: np.random.Generator) -> float:
    g = rng.standard_normal()
    u = rng.random()
    p_noisy = min(1.0, max(0.0, p + noise_std * g))
    return 1.0 if u < p_noisy else 0.0


def optimal_action(spec: SyntheticEnvSpec, s: Context) -> tuple[int, float]:
    """Best action and its probability; ties go to the lowest index."""
    p = reward_probabilities(spec, s)[0]
    a = int(np.argmax(p))
    return a, float(p[a])


def grid_heatmap(
    spec: SyntheticEnvSpec,
    dims: tuple[int, int] = (0, 1),
    resolution: int = 50,
    fixed_values: Sequence[float] | None = None,
) -> np.ndarray:
    """Mean reward probability over actions on a grid spanning two context dims.

    Cell ``(r, c)`` sits at the center of the ``r``-th bin along ``dims[0]``
    and the ``c``-th bin along ``dims[1]``.  The remaining dimensions are held
    at ``fixed_values`` (default 0.5), given either for all ``d`` dimensions
    or only for the ``d - 2`` free ones in order.
    """
    i, j = dims
    if spec.d < 2 or i == j or not (0 <= i < spec.d and 0 <= j < spec.d):
        raise ConfigError(f"dims {dims} invalid for d={spec.d}")
    if resolution < 1:
        raise ConfigError("resolution must be >= 1")
    others = [k for k in range(spec.d) if k not in (i, j)]
    base = np.full(spec.d, 0.5)
    if fixed_values is not None:
        fixed_values = list(fixed_values)
        if len(fixed_values) == spec.d:
            base[:] = fixed_values
        elif len(fixed_values) == len(others):
            base[others] = fixed_values
        else:
            raise ConfigError(f"fixed_values needs {len(others)} or {spec.d} entries")
    centers = (np.arange(resolution) + 0.5) / resolution
    rr, cc = np.meshgrid(centers, centers, indexing="ij")
    pts = np.tile(base, (resolution * resolution, 1))
    pts[:, i] = rr.ravel()
    pts[:, j] = cc.ravel()
    return reward_probabilities(spec, pts).mean(axis=1).reshape(resolution, resolution)


def save_spec(spec: SyntheticEnvSpec, path) -> None:
    try:
        Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_spec(path) -> SyntheticEnvSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return SyntheticEnvSpec.from_dict(doc)


def write_heatmap_csv(matrix: np.ndarray, path) -> None:
    try:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in matrix:
                w.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise IoError(str(exc)) from exc
