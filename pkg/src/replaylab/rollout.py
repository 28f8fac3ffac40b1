"""Experience collection: episodic mode and fixed-T multi-actor rollouts.

T-step rollouts do not align with episode boundaries. When an episode ends
mid-rollout its level's score is finalized immediately (folding in any
partial score left from earlier rollouts) and the actor moves to the next
level. When the rollout ends mid-episode, the dangling segment's score and
step count are parked in the score table's partial slot.

All sampler access happens in ascending actor order, and one generator
drives every random draw, so a fixed seed reproduces rollouts exactly.
Rewards are normalized (when configured) before both learning and scoring;
raw rewards are kept alongside for return reporting.
"""

from dataclasses import dataclass

import numpy as np

from replaylab.env import ChainMaze, generate_level
from replaylab.learner import PolicyParams, RewardNormalizer, UpdateConfig, forward, sample_action
from replaylab.sampler import ReplayConfig, ScoreTable, sample_next_level, update_level_score
from replaylab.scoring import (
    PartialScore,
    Trajectory,
    combine_partials,
    score_trajectory,
)


@dataclass
class RolloutBuffer:
    """T steps for each of N_b actors, actor-major."""

    obs: np.ndarray            # (N_b, T, H, W, 3) int8
    actions: np.ndarray        # (N_b, T)
    log_probs: np.ndarray      # (N_b, T)
    rewards: np.ndarray        # (N_b, T) as seen by the learner
    raw_rewards: np.ndarray    # (N_b, T) straight from the env
    values: np.ndarray         # (N_b, T)
    dones: np.ndarray          # (N_b, T) bool
    policy: np.ndarray         # (N_b, T, A)
    level_ids: np.ndarray      # (N_b, T) uint64
    level_index: np.ndarray    # (N_b, T), -1 when no score table is in play
    bootstrap_values: np.ndarray  # (N_b,) value at s_T, 0 where the row ended done

    @property
    def n_actors(self) -> int:
        return self.obs.shape[0]

    @property
    def length(self) -> int:
        return self.obs.shape[1]

    def total_steps(self) -> int:
        return self.n_actors * self.length

    def actor_segments(self, actor: int) -> list[tuple[slice, Trajectory]]:
        """Split one actor's row into per-episode segments.

        Every segment but possibly the last ends with done; the last open
        segment bootstraps from the stored end-of-rollout value.
        """
        T = self.length
        bounds = [0] + [t + 1 for t in range(T) if self.dones[actor, t]]
        if bounds[-1] != T:
            bounds.append(T)
        out = []
        for lo, hi in zip(bounds, bounds[1:]):
            sl = slice(lo, hi)
            ends_done = bool(self.dones[actor, hi - 1])
            traj = Trajectory(
                actions=self.actions[actor, sl],
                log_probs=self.log_probs[actor, sl],
                rewards=self.rewards[actor, sl],
                values=self.values[actor, sl],
                dones=self.dones[actor, sl],
                policy=self.policy[actor, sl],
                bootstrap_value=0.0 if ends_done else float(self.bootstrap_values[actor]),
            )
            out.append((sl, traj))
        return out

    def segments(self) -> list[Trajectory]:
        """All segments, actors in order, time order within an actor."""
        return [traj for a in range(self.n_actors) for _, traj in self.actor_segments(a)]


@dataclass
class EpisodeEvent:
    """One completed episode inside a rollout."""

    actor: int
    level_id: int
    level_index: int
    raw_return: float
    steps: int
    score: float | None
    difficulty: int


class Collector:
    """Owns the envs and per-actor state for repeated collect_rollout calls.

    ``baseline=True`` is direct level sampling: levels drawn uniformly from
    the training set, no score table, no scoring work at all.
    """

    def __init__(
        self,
        table: ScoreTable | None,
        replay_cfg: ReplayConfig | None,
        update_cfg: UpdateConfig,
        train_levels: set[int],
        max_tier: int,
        rng: np.random.Generator,
        baseline: bool = False,
    ):
        self.table = table
        self.replay_cfg = replay_cfg
        self.update_cfg = update_cfg
        self.train_levels = set(train_levels)
        self._train_sorted = sorted(self.train_levels)
        self.max_tier = max_tier
        self.rng = rng
        self.baseline = baseline
        n = update_cfg.workers
        self.envs = [ChainMaze(max_tier) for _ in range(n)]
        self.normalizer = (
            RewardNormalizer(n, update_cfg.gamma) if update_cfg.reward_normalization else None
        )
        self._level_id = [None] * n
        self._level_idx = [-1] * n
        self._obs = [None] * n
        self._ep_return = np.zeros(n)
        self._ep_steps = np.zeros(n, dtype=np.int64)
        self._started = False
        self.sampled_difficulties: list[int] = []  # every level selection, in order

    def _next_level(self, actor: int) -> tuple[int, int]:
        if self.baseline:
            level_id = self._train_sorted[self.rng.integers(0, len(self._train_sorted))]
            idx = -1
        else:
            level_id, _ = sample_next_level(self.table, self.replay_cfg, self.train_levels, self.rng)
            idx = self.table.index_of(level_id)
        spec = generate_level(level_id, self.max_tier)
        self._obs[actor] = self.envs[actor].reset(spec)
        self._level_id[actor] = level_id
        self._level_idx[actor] = idx
        self._ep_return[actor] = 0.0
        self._ep_steps[actor] = 0
        self.sampled_difficulties.append(spec.difficulty)
        return level_id, idx

    def _start(self):
        for actor in range(self.update_cfg.workers):
            self._next_level(actor)
        self._started = True

    def _finalize_score(self, idx: int, segment: Trajectory):
        cfg, ucfg = self.replay_cfg, self.update_cfg
        seg_score = score_trajectory(
            segment, cfg.metric, ucfg.gamma, ucfg.lam, cfg.invert_uncertainty
        )
        whole = PartialScore(seg_score, len(segment))
        pending = self.table.partial[idx]
        if pending is not None:
            whole = combine_partials(pending, whole)
        update_level_score(self.table, idx, whole.score)
        return whole.score

    def _park_partial(self, actor: int, segment: Trajectory):
        cfg, ucfg = self.replay_cfg, self.update_cfg
        idx = self._level_idx[actor]
        seg_score = score_trajectory(
            segment, cfg.metric, ucfg.gamma, ucfg.lam, cfg.invert_uncertainty
        )
        part = PartialScore(seg_score, len(segment))
        pending = self.table.partial[idx]
        if pending is not None:
            part = combine_partials(pending, part)
        self.table.set_partial(idx, part)

    def collect_rollout(self, params: PolicyParams) -> tuple[RolloutBuffer, list[EpisodeEvent]]:
        if not self._started:
            self._start()
        n, T = self.update_cfg.workers, self.update_cfg.rollout_length
        env0 = self.envs[0]
        obs_buf = np.zeros((n, T, *env0.obs_shape), dtype=np.int8)
        actions = np.zeros((n, T), dtype=np.int64)
        log_probs = np.zeros((n, T))
        rewards = np.zeros((n, T))
        raw_rewards = np.zeros((n, T))
        values = np.zeros((n, T))
        dones = np.zeros((n, T), dtype=bool)
        policy = np.zeros((n, T, 4))
        level_ids = np.zeros((n, T), dtype=np.uint64)
        level_index = np.full((n, T), -1, dtype=np.int64)
        seg_start = [0] * n
        events: list[EpisodeEvent] = []

        for t in range(T):
            stacked = np.stack(self._obs)
            probs, vals = forward(params, stacked)
            step_rewards = np.zeros(n)
            step_dones = np.zeros(n, dtype=bool)
            for actor in range(n):
                a = sample_action(probs[actor], self.rng)
                obs_buf[actor, t] = self._obs[actor]
                actions[actor, t] = a
                log_probs[actor, t] = np.log(probs[actor, a])
                values[actor, t] = vals[actor]
                policy[actor, t] = probs[actor]
                level_ids[actor, t] = self._level_id[actor]
                level_index[actor, t] = self._level_idx[actor]
                nxt, r, done = self.envs[actor].step(a)
                self._obs[actor] = nxt
                step_rewards[actor] = r
                step_dones[actor] = done
                self._ep_return[actor] += r
                self._ep_steps[actor] += 1
            raw_rewards[:, t] = step_rewards
            if self.normalizer is not None:
                step_rewards = self.normalizer.normalize(step_rewards, step_dones)
            rewards[:, t] = step_rewards
            dones[:, t] = step_dones

            for actor in range(n):
                if not step_dones[actor]:
                    continue
                sl = slice(seg_start[actor], t + 1)
                score = None
                idx = self._level_idx[actor]
                if not self.baseline:
                    segment = Trajectory(
                        actions=actions[actor, sl],
                        log_probs=log_probs[actor, sl],
                        rewards=rewards[actor, sl],
                        values=values[actor, sl],
                        dones=dones[actor, sl],
                        policy=policy[actor, sl],
                        bootstrap_value=0.0,
                    )
                    score = self._finalize_score(idx, segment)
                events.append(
                    EpisodeEvent(
                        actor=actor,
                        level_id=self._level_id[actor],
                        level_index=idx,
                        raw_return=float(self._ep_return[actor]),
                        steps=int(self._ep_steps[actor]),
                        score=score,
                        difficulty=self.envs[actor].spec.difficulty,
                    )
                )
                self._next_level(actor)
                seg_start[actor] = t + 1

        # Value at s_T for rows whose last episode is still open.
        tail_vals = forward(params, np.stack(self._obs))[1]
        bootstrap = np.where(dones[:, -1], 0.0, tail_vals)
        buffer = RolloutBuffer(
            obs=obs_buf, actions=actions, log_probs=log_probs, rewards=rewards,
            raw_rewards=raw_rewards, values=values, dones=dones, policy=policy,
            level_ids=level_ids, level_index=level_index, bootstrap_values=bootstrap,
        )
        if not self.baseline:
            for actor in range(n):
                if seg_start[actor] < T:  # open segment: park its partial score
                    sl, traj = buffer.actor_segments(actor)[-1]
                    assert sl.start == seg_start[actor]
                    self._park_partial(actor, traj)
        return buffer, events


def collect_episode(
    table: ScoreTable,
    replay_cfg: ReplayConfig,
    update_cfg: UpdateConfig,
    train_levels: set[int],
    env: ChainMaze,
    params: PolicyParams,
    rng: np.random.Generator,
    normalizer: RewardNormalizer | None = None,
) -> tuple[Trajectory, int]:
    """Episodic mode: one level, one full episode, one score update."""
    level_id, _ = sample_next_level(table, replay_cfg, train_levels, rng)
    idx = table.index_of(level_id)
    obs = env.reset(generate_level(level_id, env.max_tier))
    rows = {k: [] for k in ("actions", "log_probs", "rewards", "values", "dones", "policy")}
    done = False
    while not done:
        probs, value = forward(params, obs)
        a = sample_action(probs, rng)
        obs, r, done = env.step(a)
        if normalizer is not None:
            r = float(normalizer.normalize(np.array([r]), np.array([done]))[0])
        rows["actions"].append(a)
        rows["log_probs"].append(np.log(probs[a]))
        rows["rewards"].append(r)
        rows["values"].append(value)
        rows["dones"].append(done)
        rows["policy"].append(probs)
    traj = Trajectory(
        actions=rows["actions"],
        log_probs=rows["log_probs"],
        rewards=rows["rewards"],
        values=rows["values"],
        dones=rows["dones"],
        policy=np.array(rows["policy"]),
        bootstrap_value=0.0,
    )
    score = score_trajectory(
        traj, replay_cfg.metric, update_cfg.gamma, update_cfg.lam,
        replay_cfg.invert_uncertainty,
    )
    update_level_score(table, idx, score)
    return traj, idx
