"""Score-table bookkeeping and prioritized selection of the next level.

The sampler keeps one row per visited level: its latest score, an optional
partial score for an episode still in flight, and the episode count at which
it was last selected. Selection mixes two distributions: a score-prioritized
one (rank, proportional, or greedy over transformed scores at temperature
``beta``) and a staleness one that favors levels not selected recently,
weighted ``(1 - rho)`` and ``rho`` respectively.

While ``warm_start`` is on and unvisited training levels remain, those are
consumed first (uniformly at random) so every level owns a real score before
replay begins. Afterwards each call is a replay draw with probability
``replay_prob``, and a uniform unseen draw otherwise; once the training set
is exhausted every call is a replay draw.
"""

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from replaylab.errors import ContractViolation
from replaylab.scoring import METRICS, PartialScore

PRIORITIZATIONS = ("rank", "proportional", "greedy")


@dataclass
class ReplayConfig:
    metric: str = "value_l1"
    prioritization: str = "rank"
    beta: float = 0.1
    rho: float = 0.3
    replay_prob: float = 1.0
    warm_start: bool = True
    invert_uncertainty: bool = False

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ContractViolation(f"unknown metric {self.metric!r}")
        if self.prioritization not in PRIORITIZATIONS:
            raise ContractViolation(f"unknown prioritization {self.prioritization!r}")
        if not self.beta > 0:
            raise ContractViolation(f"beta must be positive, got {self.beta}")
        if not 0.0 <= self.rho <= 1.0:
            raise ContractViolation(f"rho must be in [0, 1], got {self.rho}")
        if not 0.0 <= self.replay_prob <= 1.0:
            raise ContractViolation(f"replay_prob must be in [0, 1], got {self.replay_prob}")


@dataclass
class ScoreTable:
    """Ordered visited-level set with scores, partials, and timestamps."""

    seen_levels: list[int] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    partial: list[PartialScore | None] = field(default_factory=list)
    timestamps: list[int] = field(default_factory=list)
    episode_counter: int = 0

    def __len__(self) -> int:
        return len(self.seen_levels)

    def _check_index(self, level_index: int):
        if not 0 <= level_index < len(self.seen_levels):
            raise ContractViolation(
                f"level index {level_index} out of range for {len(self.seen_levels)} levels"
            )

    def index_of(self, level_id: int) -> int:
        try:
            return self._index_cache[level_id]
        except (AttributeError, KeyError):
            self._index_cache = {lid: i for i, lid in enumerate(self.seen_levels)}
            if level_id not in self._index_cache:
                raise ContractViolation(f"level {level_id} has not been seen")
            return self._index_cache[level_id]

    def add_level(self, level_id: int) -> int:
        if level_id in self.seen_levels:
            raise ContractViolation(f"level {level_id} already in table")
        self.seen_levels.append(level_id)
        self.scores.append(0.0)
        self.partial.append(None)
        self.timestamps.append(0)
        if hasattr(self, "_index_cache"):
            self._index_cache[level_id] = len(self.seen_levels) - 1
        return len(self.seen_levels) - 1

    def set_partial(self, level_index: int, value: PartialScore | None):
        self._check_index(level_index)
        self.partial[level_index] = value

    def copy(self) -> "ScoreTable":
        return ScoreTable(
            seen_levels=list(self.seen_levels),
            scores=list(self.scores),
            partial=list(self.partial),
            timestamps=list(self.timestamps),
            episode_counter=self.episode_counter,
        )

    def save(self, path):
        record = {
            "seen_levels": self.seen_levels,
            "scores": self.scores,
            "timestamps": self.timestamps,
            "episode_counter": self.episode_counter,
            "partial": [list(p) if p is not None else None for p in self.partial],
        }
        with open(path, "w") as fh:
            fh.write(json.dumps(record) + "\n")

    @classmethod
    def load(cls, path) -> "ScoreTable":
        with open(path) as fh:
            record = json.loads(fh.readline())
        return cls(
            seen_levels=[int(x) for x in record["seen_levels"]],
            scores=[float(x) for x in record["scores"]],
            partial=[
                PartialScore(float(p[0]), int(p[1])) if p is not None else None
                for p in record["partial"]
            ],
            timestamps=[int(x) for x in record["timestamps"]],
            episode_counter=int(record["episode_counter"]),
        )


class ScoreDistribution(NamedTuple):
    probs: np.ndarray
    uniform_fallback: bool


def _uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def score_distribution(table: ScoreTable, config: ReplayConfig) -> ScoreDistribution:
    """Probabilities over seen levels from their scores (the P_S term)."""
    n = len(table)
    if n < 1:
        raise ContractViolation("score table is empty")
    scores = np.asarray(table.scores, dtype=np.float64)
    if not np.isfinite(scores).all():
        raise ContractViolation("non-finite scores in table")

    if config.prioritization == "greedy":
        probs = np.zeros(n)
        probs[int(np.argmax(scores))] = 1.0
        return ScoreDistribution(probs, False)

    if config.prioritization == "rank":
        # Competition ranking: tied scores share a rank, so equal scores get
        # equal probability and any strictly monotone rescoring changes nothing.
        ranks = 1 + (scores[None, :] > scores[:, None]).sum(axis=1)
        h = 1.0 / ranks
    else:  # proportional
        if (scores < 0).any() or not (scores > 0).any():
            return ScoreDistribution(_uniform(n), True)
        h = scores

    # h^(1/beta) in log space; beta near 0 would overflow a direct power.
    with np.errstate(divide="ignore"):
        log_h = np.log(h)
    log_w = (log_h - log_h.max()) / config.beta
    weights = np.exp(log_w)
    return ScoreDistribution(weights / weights.sum(), False)


def staleness_distribution(table: ScoreTable) -> np.ndarray:
    """Probabilities proportional to episodes elapsed since last selection."""
    n = len(table)
    if n < 1:
        raise ContractViolation("score table is empty")
    stamps = np.asarray(table.timestamps, dtype=np.float64)
    if table.episode_counter < stamps.max():
        raise ContractViolation("episode counter behind a timestamp")
    staleness = table.episode_counter - stamps
    total = staleness.sum()
    if total == 0:
        return _uniform(n)
    return staleness / total


def replay_distribution(table: ScoreTable, config: ReplayConfig) -> np.ndarray:
    p_s = score_distribution(table, config).probs
    if config.rho == 0.0:
        return p_s
    p_c = staleness_distribution(table)
    if config.rho == 1.0:
        return p_c
    return (1.0 - config.rho) * p_s + config.rho * p_c


def _sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    # Inverse-CDF keeps the draw identical across numpy versions.
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return int(np.searchsorted(cdf, rng.random(), side="right"))


def sample_next_level(
    table: ScoreTable,
    config: ReplayConfig,
    train_levels: set[int],
    rng: np.random.Generator,
) -> tuple[int, bool]:
    """Pick the level for the next episode; returns (level_id, was_new).

    Mutates the table: bumps the episode counter and stamps the chosen level.
    """
    if not train_levels:
        raise ContractViolation("train_levels is empty")
    table.episode_counter += 1

    seen = set(table.seen_levels)
    unseen = sorted(lid for lid in train_levels if lid not in seen)

    take_new = False
    if unseen:
        if config.warm_start and len(seen) < len(train_levels):
            take_new = True
        elif rng.random() >= config.replay_prob:
            take_new = True

    if take_new:
        level_id = unseen[rng.integers(0, len(unseen))]
        idx = table.add_level(level_id)
        table.timestamps[idx] = table.episode_counter
        return level_id, True

    if len(table) == 0:
        raise ContractViolation("no seen levels to replay and no unseen levels offered")
    probs = replay_distribution(table, config)
    idx = _sample_categorical(probs, rng)
    table.timestamps[idx] = table.episode_counter
    return table.seen_levels[idx], False


def update_level_score(table: ScoreTable, level_index: int, score: float):
    """Overwrite a level's score with its latest trajectory's score."""
    table._check_index(level_index)
    if not np.isfinite(score):
        raise ContractViolation(f"score must be finite, got {score}")
    table.scores[level_index] = float(score)
    table.partial[level_index] = None
