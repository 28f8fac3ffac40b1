"""Learning-potential scores for trajectory segments.

Six metrics are supported, identified by the strings in ``METRICS``. Three
look only at the policy distribution (``entropy``, ``min_margin``,
``least_confidence``); three are TD-based (``td_error``, ``gae``,
``value_l1``) and need rewards, values and a bootstrap value.

Sign conventions follow the source material as printed: ``entropy`` is
Σ π log π (so it lies in [−ln|A|, 0] and confident policies score high),
and ``min_margin`` is top-1 minus top-2 probability (confident policies
again score high). ``invert_uncertainty=True`` flips both toward the
conventional active-learning orientation; it is off by default.

Episodes can be scored in segments (a rollout boundary may cut an episode
in half). A segment's score plus its step count is enough to fold in the
remainder later via ``merge_partial_score``; GAE-based metrics are defined
per segment, each bootstrapping from the value at its own final state.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from replaylab.errors import ContractViolation

METRICS = ("entropy", "min_margin", "least_confidence", "td_error", "gae", "value_l1")

# Metrics that ignore rewards/values entirely.
POLICY_METRICS = ("entropy", "min_margin", "least_confidence")


@dataclass
class Trajectory:
    """One scored segment: per-step policy outputs plus the env signals.

    ``dones`` may be True only on the final step; ``bootstrap_value`` is the
    value estimate at the state after the last step (0.0 if that step ended
    the episode). Observations are not needed for scoring and are not stored
    here.
    """

    actions: np.ndarray      # (T,) int
    log_probs: np.ndarray    # (T,)
    rewards: np.ndarray      # (T,)
    values: np.ndarray       # (T,)
    dones: np.ndarray        # (T,) bool
    policy: np.ndarray       # (T, A) rows sum to 1
    bootstrap_value: float = 0.0

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.log_probs = np.asarray(self.log_probs, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.dones = np.asarray(self.dones, dtype=bool)
        self.policy = np.asarray(self.policy, dtype=np.float64)
        T = len(self.rewards)
        if T < 1:
            raise ContractViolation("trajectory must contain at least one step")
        for name in ("actions", "log_probs", "values", "dones"):
            if len(getattr(self, name)) != T:
                raise ContractViolation(f"{name} length does not match rewards")
        if self.policy.shape != (T, self.policy.shape[-1]) or self.policy.ndim != 2:
            raise ContractViolation("policy must be (T, n_actions)")
        if self.dones[:-1].any():
            raise ContractViolation("done may be set on the final step only")
        for name in ("log_probs", "rewards", "values", "policy"):
            if not np.isfinite(getattr(self, name)).all():
                raise ContractViolation(f"non-finite values in {name}")
        if not np.isfinite(self.bootstrap_value):
            raise ContractViolation("non-finite bootstrap value")
        if not np.allclose(self.policy.sum(axis=1), 1.0, atol=1e-9):
            raise ContractViolation("policy rows must sum to 1")

    def __len__(self) -> int:
        return len(self.rewards)


def compute_gae(traj: Trajectory, gamma: float, lam: float) -> np.ndarray:
    """Advantage estimates A_t for every step of ``traj``.

    delta_t = r_t + gamma*V(s_{t+1})*(1-done_t) - V(s_t), with V(s_T) taken
    from the bootstrap value; A_t follows the backward recursion
    A_t = delta_t + gamma*lam*(1-done_t)*A_{t+1}.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ContractViolation(f"gamma must be in [0, 1], got {gamma}")
    if not 0.0 <= lam <= 1.0:
        raise ContractViolation(f"lambda must be in [0, 1], got {lam}")
    T = len(traj)
    not_done = 1.0 - traj.dones.astype(np.float64)
    next_values = np.append(traj.values[1:], traj.bootstrap_value)
    deltas = traj.rewards + gamma * next_values * not_done - traj.values
    advantages = np.empty(T, dtype=np.float64)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        acc = deltas[t] + gamma * lam * not_done[t] * acc
        advantages[t] = acc
    return advantages


def _td_deltas(traj: Trajectory, gamma: float) -> np.ndarray:
    not_done = 1.0 - traj.dones.astype(np.float64)
    next_values = np.append(traj.values[1:], traj.bootstrap_value)
    return traj.rewards + gamma * next_values * not_done - traj.values


def score_trajectory(
    traj: Trajectory,
    metric: str,
    gamma: float,
    lam: float,
    invert_uncertainty: bool = False,
) -> float:
    """Time-averaged score of one segment under the named metric."""
    if metric not in METRICS:
        raise ContractViolation(f"unknown metric {metric!r}; expected one of {METRICS}")

    if metric == "entropy":
        p = traj.policy
        neg_entropy = np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0), axis=1)
        per_step = -neg_entropy if invert_uncertainty else neg_entropy
    elif metric == "min_margin":
        if traj.policy.shape[1] < 2:
            raise ContractViolation("min_margin needs at least 2 actions")
        part = np.partition(traj.policy, -2, axis=1)
        margin = part[:, -1] - part[:, -2]
        per_step = 1.0 - margin if invert_uncertainty else margin
    elif metric == "least_confidence":
        per_step = 1.0 - traj.policy.max(axis=1)
    elif metric == "td_error":
        per_step = np.abs(_td_deltas(traj, gamma))
    elif metric == "gae":
        per_step = compute_gae(traj, gamma, lam)
    else:  # value_l1
        per_step = np.abs(compute_gae(traj, gamma, lam))
    return float(per_step.mean())


class PartialScore(NamedTuple):
    """Score of an episode prefix plus how many steps produced it."""

    score: float
    steps: int


def combine_partials(a: PartialScore, b: PartialScore) -> PartialScore:
    """Step-weighted mean of two scored segments of the same episode."""
    steps = a.steps + b.steps
    return PartialScore((a.score * a.steps + b.score * b.steps) / steps, steps)


def merge_partial_score(
    partial: PartialScore,
    tail: Trajectory,
    metric: str,
    gamma: float,
    lam: float,
    invert_uncertainty: bool = False,
) -> float:
    """Fold the final segment of an episode into its stored partial score."""
    if partial.steps < 1:
        raise ContractViolation("partial score must cover at least one step")
    tail_score = score_trajectory(tail, metric, gamma, lam, invert_uncertainty)
    return combine_partials(partial, PartialScore(tail_score, len(tail))).score
