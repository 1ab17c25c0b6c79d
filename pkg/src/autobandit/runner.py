"""Block-protocol experiment runner.

A run plays ``n_blocks`` blocks of ``block_size`` episodes.  The
meta-learner policy is frozen inside a block and refit on everything
collected so far at each block boundary; the first block has no model and
plays uniformly at random.  Runs draw their randomness from streams
derived from ``(master_seed, run_index)`` only, so results do not depend
on how runs are scheduled across workers.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Episode, InteractionLog, RegretSeries, append_episode, compute_regret, write_log_csv
from .datasets import builtin_paths, load_csv, load_schema, pull_label, to_bandit
from .errors import BanditError, ConfigError, DataError, IoError, LengthError, StreamExhausted
from .metalearn import QModel, SearchBudget, build_qmodel, fit_featurizer, search, train_holdout_split
from .metalearn.search import fit_candidate, mae
from .policies import (
    EpsilonSchedule,
    OnlineLinearBaseline,
    baseline_update,
    epsilon_at,
    epsilon_greedy,
    random_policy,
)
from .synthetic import (
    SyntheticEnvSpec,
    generate_spec,
    load_spec,
    pull_with_probability,
    reward_probabilities,
    sample_contexts,
)

logger = logging.getLogger(__name__)

POLICIES = ("meta_learner", "random", "online_baseline")


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class SyntheticEnvConfig:
    spec: SyntheticEnvSpec

    def to_dict(self) -> dict:
        return {"kind": "synthetic", "spec": self.spec.to_dict()}


@dataclass(frozen=True)
class DatasetEnvConfig:
    csv: str | None = None
    schema: str | None = None
    builtin: str | None = None

    def paths(self) -> tuple[Path, Path]:
        if self.builtin is not None:
            return builtin_paths(self.builtin)
        return Path(self.csv), Path(self.schema)

    def to_dict(self) -> dict:
        doc = {"kind": "dataset"}
        if self.builtin is not None:
            doc["builtin"] = self.builtin
        else:
            doc["csv"] = self.csv
            doc["schema"] = self.schema
        return doc


def environment_from_dict(doc: dict, base_dir: Path | None = None):
    """Parse the ``environment`` section of a config.

    Synthetic environments are given inline (``spec``), by file (``path``)
    or as generator arguments (``generate``); they are always resolved to a
    concrete spec.  Relative file paths are taken against ``base_dir``.
    """
    base_dir = base_dir or Path(".")
    kind = doc.get("kind")
    if kind == "synthetic":
        if "spec" in doc:
            return SyntheticEnvConfig(SyntheticEnvSpec.from_dict(doc["spec"]))
        if "path" in doc:
            return SyntheticEnvConfig(load_spec(base_dir / doc["path"]))
        if "generate" in doc:
            g = dict(doc["generate"])
            try:
                spec = generate_spec(
                    d=int(g["d"]),
                    K=int(g["K"]),
                    F=int(g["F"]),
                    sigma_range=tuple(g.get("sigma_range", (0.1, 0.3))),
                    noise_std=float(g.get("noise_std", 0.0)),
                    seed=int(g.get("seed", 0)),
                    base_prob=float(g.get("base_prob", 0.0)),
                )
            except KeyError as exc:
                raise ConfigError(f"generate section lacks {exc}") from exc
            return SyntheticEnvConfig(spec)
        raise ConfigError("synthetic environment needs one of 'spec', 'path', 'generate'")
    if kind == "dataset":
        if "builtin" in doc:
            builtin_paths(doc["builtin"])
            return DatasetEnvConfig(builtin=doc["builtin"])
        try:
            return DatasetEnvConfig(
                csv=str((base_dir / doc["csv"]).resolve()),
                schema=str((base_dir / doc["schema"]).resolve()),
            )
        except KeyError as exc:
            raise ConfigError(f"dataset environment lacks {exc}") from exc
    raise ConfigError(f"environment kind must be 'synthetic' or 'dataset', got {kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    environment: SyntheticEnvConfig | DatasetEnvConfig
    policy: str = "meta_learner"
    block_size: int = 500
    n_blocks: int = 10
    schedule: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    budget: SearchBudget = field(default_factory=SearchBudget)
    runs: int = 1
    master_seed: int = 0
    output_path: str = "results"
    ensemble_k: int = 3
    learning_rate: float = 0.1
    final_retrain: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if not 1 <= self.block_size <= 10**6:
            raise ConfigError(f"block_size must be in [1, 10^6], got {self.block_size}")
        if self.n_blocks < 1 or self.runs < 1 or self.workers < 1 or self.ensemble_k < 1:
            raise ConfigError("n_blocks, runs, workers and ensemble_k must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")

    @property
    def horizon(self) -> int:
        return self.block_size * self.n_blocks

    def resolved_schedule(self) -> EpsilonSchedule:
        """Linear schedules without ``T_anneal`` anneal over the whole horizon."""
        if self.schedule.kind == "linear" and self.schedule.T_anneal is None:
            return EpsilonSchedule("linear", self.schedule.epsilon0, self.horizon)
        return self.schedule

    def replace(self, **changes) -> "ExperimentConfig":
        doc = {f: getattr(self, f) for f in self.__dataclass_fields__}
        doc.update(changes)
        return ExperimentConfig(**doc)

    def to_dict(self) -> dict:
        return {
            "environment": self.environment.to_dict(),
            "policy": self.policy,
            "block_size": self.block_size,
            "n_blocks": self.n_blocks,
            "schedule": self.schedule.to_dict(),
            "budget": {
                "max_candidates": self.budget.max_candidates,
                "cv_folds": self.budget.cv_folds,
                "holdout_fraction": self.budget.holdout_fraction,
                "seed": self.budget.seed,
            },
            "runs": self.runs,
            "master_seed": self.master_seed,
            "output_path": self.output_path,
            "ensemble_k": self.ensemble_k,
            "learning_rate": self.learning_rate,
            "final_retrain": self.final_retrain,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        if "environment" not in doc:
            raise ConfigError("config lacks an 'environment' section")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            kwargs = dict(doc)
            kwargs["environment"] = environment_from_dict(doc["environment"], base_dir)
            if "schedule" in doc:
                kwargs["schedule"] = EpsilonSchedule.from_dict(doc["schedule"])
            if "budget" in doc:
                kwargs["budget"] = SearchBudget(**doc["budget"])
            for key in ("block_size", "n_blocks", "runs", "master_seed", "ensemble_k", "workers"):
                if key in kwargs:
                    kwargs[key] = int(kwargs[key])
            if "learning_rate" in kwargs:
                kwargs["learning_rate"] = float(kwargs["learning_rate"])
            if "final_retrain" in kwargs:
                kwargs["final_retrain"] = bool(kwargs["final_retrain"])
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(doc, base_dir=path.parent)


# ---------------------------------------------------------------- environments


class SyntheticEnvironment:
    """Regret is measured on expected rewards, i.e. the true probabilities."""

    def __init__(self, spec: SyntheticEnvSpec):
        self.spec = spec
        self.schema = spec.schema
        self.K = spec.K

    def draw_block(self, n: int, rng: np.random.Generator):
        pts = sample_contexts(self.spec, n, rng)
        return [tuple(row) for row in pts.tolist()], reward_probabilities(self.spec, pts)

    def respond(self, truth, a: int, rng: np.random.Generator) -> tuple[float, float, float]:
        reward = pull_with_probability(float(truth[a]), self.spec.noise_std, rng)
        return reward, float(truth.max()), float(truth[a])


class DatasetEnvironment:
    """Label environment: the correct class always pays 1."""

    def __init__(self, stream):
        self.stream = stream
        self.schema = stream.schema.feature_schema
        self.K = stream.schema.K
        self.cursor = 0

    def draw_block(self, n: int, rng: np.random.Generator):
        if self.cursor + n > len(self.stream):
            raise StreamExhausted(
                f"stream of {len(self.stream)} rows exhausted at row {self.cursor} (need {n} more)"
            )
        sl = slice(self.cursor, self.cursor + n)
        self.cursor += n
        return list(self.stream.contexts[sl]), np.asarray(self.stream.labels[sl])

    def respond(self, truth, a: int, rng: np.random.Generator) -> tuple[float, float, float]:
        reward = pull_label(int(truth), a, self.K)
        return reward, 1.0, reward


def load_dataset(env_cfg: DatasetEnvConfig):
    csv_path, schema_path = env_cfg.paths()
    return load_csv(csv_path, load_schema(schema_path))


def make_environment(cfg: ExperimentConfig, run_seed: int, dataset=None):
    if isinstance(cfg.environment, SyntheticEnvConfig):
        return SyntheticEnvironment(cfg.environment.spec)
    ds = dataset if dataset is not None else load_dataset(cfg.environment)
    if len(ds) < cfg.horizon:
        raise ConfigError(f"dataset has {len(ds)} rows, experiment needs {cfg.horizon}")
    return DatasetEnvironment(to_bandit(ds, shuffle_seed=run_seed))


# ---------------------------------------------------------------- seeding


def derive_run_seed(master_seed: int, run_index: int) -> int:
    return int(np.random.SeedSequence([master_seed, run_index]).generate_state(1, np.uint64)[0])


@dataclass
class RunStreams:
    context: np.random.Generator
    policy: np.random.Generator
    reward: np.random.Generator
    learner: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RunStreams":
        return cls(*(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)))


# ---------------------------------------------------------------- agents


class MetaLearnerAgent:
    """ε-greedy over the current QModel; plays uniformly while no model exists."""

    name = "meta_learner"

    def __init__(self, K: int):
        self.K = K
        self.qmodel: QModel | None = None
        self._q = None

    def start_block(self, contexts):
        self._q = self.qmodel.q_values(contexts) if self.qmodel is not None else None

    def act(self, i, context, eps, rng):
        if self._q is None:
            a, explored = epsilon_greedy(np.zeros(self.K), 1.0, rng)
            return a, explored, 1.0
        a, explored = epsilon_greedy(self._q[i], eps, rng)
        return a, explored, eps

    def observe(self, context, a, reward):
        pass


class RandomAgent:
    name = "random"

    def __init__(self, K: int):
        self.K = K

    def start_block(self, contexts):
        pass

    def act(self, i, context, eps, rng):
        return random_policy(self.K, rng), True, 1.0

    def observe(self, context, a, reward):
        pass


class OnlineAgent:
    name = "online_baseline"

    def __init__(self, baseline: OnlineLinearBaseline):
        self.baseline = baseline

    def start_block(self, contexts):
        pass

    def act(self, i, context, eps, rng):
        a, explored = epsilon_greedy(self.baseline.predict(context), eps, rng)
        return a, explored, eps

    def observe(self, context, a, reward):
        baseline_update(self.baseline, context, a, reward)


def make_agent(policy: str, env, cfg: ExperimentConfig):
    if policy == "meta_learner":
        return MetaLearnerAgent(env.K)
    if policy == "random":
        return RandomAgent(env.K)
    return OnlineAgent(OnlineLinearBaseline(env.schema, env.K, cfg.learning_rate, cfg.resolved_schedule()))


# ---------------------------------------------------------------- protocol


def run_block(agent, env, log: InteractionLog, block_size: int, schedule: EpsilonSchedule,
              block_index: int, streams: RunStreams):
    """Play one block with the agent's current state, appending to ``log``.

    Returns ``(log, oracle)`` where ``oracle`` holds the block's per-step
    ``(best_value, taken_value)`` pairs.
    """
    if block_size < 1:
        raise ConfigError(f"block_size must be >= 1, got {block_size}")
    contexts, truths = env.draw_block(block_size, streams.context)
    agent.start_block(contexts)
    t_offset = len(log)
    oracle = np.empty((block_size, 2))
    for i, (context, truth) in enumerate(zip(contexts, truths)):
        t = t_offset + i + 1
        eps = epsilon_at(schedule, t, block_index)
        a, explored, eps_used = agent.act(i, context, eps, streams.policy)
        reward, best, taken = env.respond(truth, a, streams.reward)
        agent.observe(context, a, reward)
        append_episode(log, Episode(t, context, a, reward, eps_used, explored))
        oracle[i] = best, taken
    return log, oracle


@dataclass
class RetrainRecord:
    block: int
    train_size: int
    heldout_mae: float
    heldout_mae_expected: float
    seconds: float
    fallback: bool = False


def retrain(
    accumulated: InteractionLog,
    budget: SearchBudget,
    rng: np.random.Generator,
    k: int = 3,
    expected: Sequence[float] | None = None,
    block: int = 0,
) -> tuple[QModel | None, RetrainRecord]:
    """Refit the Q-function on every episode collected so far.

    A random ``budget.holdout_fraction`` of the episodes is held out: the
    search and ranking use the rest, and the ensemble is scored on the
    held-out part (against realized rewards, and against ``expected``
    rewards when given).  The deployed ensemble is then refit on all
    episodes.  Returns ``(None, record)`` when too little data remains for
    cross-validation; callers then keep playing at random.
    """
    start = time.perf_counter()
    n = len(accumulated)
    nan = float("nan")
    train_idx, hold_idx = train_holdout_split(n, budget.holdout_fraction, rng)
    search_seed = int(np.random.SeedSequence([budget.seed, int(rng.integers(2**63))])
                      .generate_state(1, np.uint64)[0])
    if len(train_idx) < 2 * budget.cv_folds:
        logger.warning("block %d: %d training episodes < %d, next block plays at random",
                       block, len(train_idx), 2 * budget.cv_folds)
        return None, RetrainRecord(block, n, nan, nan, time.perf_counter() - start, fallback=True)
    train = accumulated.subset(train_idx)
    feat = fit_featurizer(train)
    ranked = search(train, SearchBudget(budget.max_candidates, budget.cv_folds,
                                        budget.holdout_fraction, search_seed), feat)
    scored = build_qmodel(ranked, feat, k)
    h_mae = h_mae_exp = nan
    if len(hold_idx):
        hold = accumulated.subset(hold_idx)
        pred = scored.predict(hold.contexts(), hold.actions())
        h_mae = mae(pred, hold.rewards())
        if expected is not None:
            h_mae_exp = mae(pred, np.asarray(expected)[hold_idx])
    full_feat = fit_featurizer(accumulated)
    X = full_feat.transform(accumulated.contexts(), accumulated.actions())
    y = accumulated.rewards()
    refit = []
    for m in scored.members:
        art = fit_candidate(m.candidate, X, y)
        art.cv_mae, art.grid_index = m.cv_mae, m.grid_index
        refit.append(art)
    q = QModel(full_feat, tuple(refit), k)
    return q, RetrainRecord(block, n, h_mae, h_mae_exp, time.perf_counter() - start)


@dataclass
class RunResult:
    policy: str
    run_index: int
    seed: int
    log: InteractionLog
    oracle: np.ndarray
    regret: RegretSeries
    retrains: list[RetrainRecord]
    block_size: int

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([e.epsilon_used for e in self.log])

    @property
    def retrain_seconds(self) -> list[float]:
        return [r.seconds for r in self.retrains]


def run_single(cfg: ExperimentConfig, run_index: int, policy: str | None = None, dataset=None) -> RunResult:
    policy = policy or cfg.policy
    seed = derive_run_seed(cfg.master_seed, run_index)
    streams = RunStreams.from_seed(seed)
    env = make_environment(cfg, seed, dataset)
    agent = make_agent(policy, env, cfg)
    schedule = cfg.resolved_schedule()
    accumulated = InteractionLog(env.schema, env.K)
    oracle_blocks = []
    retrains = []
    for b in range(1, cfg.n_blocks + 1):
        _, oracle = run_block(agent, env, accumulated, cfg.block_size, schedule, b, streams)
        oracle_blocks.append(oracle)
        if policy == "meta_learner" and (b < cfg.n_blocks or cfg.final_retrain):
            expected = np.concatenate(oracle_blocks)[:, 1]
            q, record = retrain(accumulated, cfg.budget, streams.learner, cfg.ensemble_k, expected, b)
            agent.qmodel = q
            retrains.append(record)
            logger.info("run %d block %d: trained on %d episodes, held-out MAE %.4f",
                        run_index, b, record.train_size, record.heldout_mae)
    oracle_all = np.concatenate(oracle_blocks)
    regret = compute_regret(accumulated, oracle_all)
    return RunResult(policy, run_index, seed, accumulated, oracle_all, regret, retrains, cfg.block_size)


def _run_single_safe(args):
    cfg, run_index, policy = args
    try:
        return run_single(cfg, run_index, policy)
    except BanditError as exc:
        exc.args = (f"run {run_index}: {exc}",)
        raise


def run_experiment(cfg: ExperimentConfig, policy: str | None = None, workers: int | None = None) -> list[RunResult]:
    """Execute ``cfg.runs`` independent runs and return them in run order."""
    policy = policy or cfg.policy
    if policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}")
    workers = cfg.workers if workers is None else workers
    if isinstance(cfg.environment, DatasetEnvConfig):
        ds = load_dataset(cfg.environment)
        if len(ds) < cfg.horizon:
            raise ConfigError(f"dataset has {len(ds)} rows, experiment needs {cfg.horizon}")
    jobs = [(cfg, i, policy) for i in range(cfg.runs)]
    if workers > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.runs)) as pool:
            return list(pool.map(_run_single_safe, jobs))
    return [_run_single_safe(job) for job in jobs]


# ---------------------------------------------------------------- aggregation & output


@dataclass(frozen=True)
class Aggregate:
    mean_average_regret: np.ndarray
    std_average_regret: np.ndarray
    mean_cumulative_regret: np.ndarray
    n_runs: int


def aggregate_runs(results: Sequence) -> Aggregate:
    """Pointwise mean and sample std of average regret across runs.

    Accepts :class:`RunResult` or :class:`RegretSeries` items.  Values are
    sorted across runs before reduction so the result is bit-identical
    under any run order.
    """
    if not results:
        raise DataError("nothing to aggregate")
    series = [r.regret if isinstance(r, RunResult) else r for r in results]
    lengths = {s.horizon for s in series}
    if len(lengths) != 1:
        raise LengthError(f"runs have different horizons: {sorted(lengths)}")
    avg = np.sort(np.vstack([s.average_regret for s in series]), axis=0)
    cum = np.sort(np.vstack([s.cumulative_regret for s in series]), axis=0)
    std = avg.std(axis=0, ddof=1) if len(series) > 1 else np.zeros(avg.shape[1])
    return Aggregate(avg.mean(axis=0), std, cum.mean(axis=0), len(series))


def block_average_regret(regret: RegretSeries, block_size: int) -> np.ndarray:
    """Mean per-step regret inside each block."""
    per_step = regret.per_step_regret
    return per_step[: len(per_step) // block_size * block_size].reshape(-1, block_size).mean(axis=1)


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_results(agg: Aggregate, results: Sequence[RunResult], path, cfg: ExperimentConfig | None = None) -> Path:
    """Write ``regret.csv``, ``mae.csv``, ``runs/<i>.csv``, ``runs/<i>_log.csv``,
    ``config.json`` (when ``cfg`` is given) and ``timing.json`` under ``path``.

    Everything except ``timing.json`` is a pure function of the inputs.
    """
    out = Path(path)
    try:
        (out / "runs").mkdir(parents=True, exist_ok=True)
        _write_rows(
            out / "regret.csv",
            ["t", "mean_avg_regret", "std_avg_regret", "mean_cum_regret"],
            ([t, _fmt(m), _fmt(s), _fmt(c)] for t, (m, s, c) in enumerate(
                zip(agg.mean_average_regret, agg.std_average_regret, agg.mean_cumulative_regret), start=1)),
        )
        mae_rows = []
        for r in results:
            for rec in r.retrains:
                mae_rows.append([r.run_index, rec.block, rec.train_size,
                                 _fmt(rec.heldout_mae), _fmt(rec.heldout_mae_expected)])
        _write_rows(out / "mae.csv",
                    ["run", "block", "train_size", "heldout_mae", "heldout_mae_expected"], mae_rows)
        for r in results:
            rg = r.regret
            rows = (
                [e.t, (e.t - 1) // r.block_size + 1, e.action, _fmt(e.reward), _fmt(e.epsilon_used),
                 int(e.explored), _fmt(r.oracle[i, 0]), _fmt(r.oracle[i, 1]), _fmt(rg.per_step_regret[i]),
                 _fmt(rg.cumulative_regret[i]), _fmt(rg.average_regret[i])]
                for i, e in enumerate(r.log)
            )
            _write_rows(out / "runs" / f"{r.run_index}.csv",
                        ["t", "block", "action", "reward", "epsilon", "explored", "best_value",
                         "taken_value", "regret", "cumulative_regret", "average_regret"], rows)
            write_log_csv(r.log, out / "runs" / f"{r.run_index}_log.csv")
        if cfg is not None:
            (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        timing = {str(r.run_index): r.retrain_seconds for r in results}
        (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write results to {out}: {exc}") from exc
    return out


def compare(cfg: ExperimentConfig, path=None, workers: int | None = None) -> dict[str, list[RunResult]]:
    """Run every policy under one config; write per-policy outputs plus a combined ``regret.csv``."""
    out = Path(path or cfg.output_path)
    results = {}
    combined = []
    for policy in POLICIES:
        runs = run_experiment(cfg, policy, workers)
        agg = aggregate_runs(runs)
        emit_results(agg, runs, out / policy, cfg.replace(policy=policy))
        results[policy] = runs
        combined.extend(
            [policy, t, _fmt(m), _fmt(s), _fmt(c)]
            for t, (m, s, c) in enumerate(
                zip(agg.mean_average_regret, agg.std_average_regret, agg.mean_cumulative_regret), start=1)
        )
    try:
        _write_rows(out / "regret.csv",
                    ["policy", "t", "mean_avg_regret", "std_avg_regret", "mean_cum_regret"], combined)
    except OSError as exc:
        raise IoError(f"cannot write results to {out}: {exc}") from exc
    return results
