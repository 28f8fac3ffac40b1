"""Experiment driver: full training runs, policy evaluation, run comparison.

A run writes everything under ``<output_dir>/seed_<seed>/``:

    metrics.jsonl   one JSON record per evaluation point (plus a final one)
    curriculum.csv  per-tier replay probability mass, long format
    params.bin      final policy checkpoint
    table.jsonl     final score table (prioritized runs only)
    config.json     the exact configuration used

Each metrics record carries the global step and wall-clock time. Wall-clock
is the one intentionally non-reproducible field; ``canonical_metrics_bytes``
strips it so two runs with the same seed can be compared byte for byte.

Training levels are the ids ``0 .. n_train_levels-1``; test levels are drawn
from ``[n_train_levels, 2^63)``, so the two sets cannot overlap.
"""

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from replaylab.env import ChainMaze, difficulty_of, generate_level, grid_width
from replaylab.errors import ContractViolation, NonFiniteLossError
from replaylab.learner import (
    AdamState,
    PolicyParams,
    UpdateConfig,
    compute_targets,
    forward,
    init_params,
    ppo_update,
    sample_action,
    save_params,
)
from replaylab.rollout import Collector
from replaylab.sampler import ReplayConfig, ScoreTable, replay_distribution

TEST_LEVEL_SPACE = 2**63


@dataclass
class ExperimentConfig:
    max_tier: int = 4
    n_train_levels: int = 200
    replay: ReplayConfig = field(default_factory=ReplayConfig)
    update: UpdateConfig = field(default_factory=UpdateConfig)
    total_steps: int = 2_000_000
    eval_every: int = 20_000
    n_test_episodes: int = 20
    seeds: list[int] = field(default_factory=lambda: [0])
    baseline: bool = False
    eval_greedy: bool = False
    output_dir: str = "runs/default"

    def __post_init__(self):
        if self.n_train_levels < 1:
            raise ContractViolation("n_train_levels must be >= 1")
        if not 1 <= self.max_tier <= 4:
            raise ContractViolation("max_tier must be in [1, 4]")
        if self.total_steps < 1 or self.eval_every < 1:
            raise ContractViolation("total_steps and eval_every must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "replay" in data:
            data["replay"] = ReplayConfig(**data["replay"])
        if "update" in data:
            data["update"] = UpdateConfig(**data["update"])
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def train_level_ids(config: ExperimentConfig) -> set[int]:
    return set(range(config.n_train_levels))


def draw_test_level(config: ExperimentConfig, rng: np.random.Generator) -> int:
    return int(rng.integers(config.n_train_levels, TEST_LEVEL_SPACE))


def evaluate_policy(
    policy,
    n_episodes: int,
    level_source,
    rng: np.random.Generator,
    max_tier: int,
    greedy: bool = False,
) -> tuple[float, float]:
    """Mean and standard error of episodic return on freshly drawn levels.

    ``policy`` is either PolicyParams or a callable (obs, rng) -> action;
    ``level_source`` is a callable (rng) -> level id.
    """
    if n_episodes < 1:
        raise ContractViolation("n_episodes must be >= 1")
    env = ChainMaze(max_tier)
    returns = np.zeros(n_episodes)
    for ep in range(n_episodes):
        obs = env.reset(generate_level(level_source(rng), max_tier))
        done, total = False, 0.0
        while not done:
            if isinstance(policy, PolicyParams):
                probs, _ = forward(policy, obs)
                action = int(np.argmax(probs)) if greedy else sample_action(probs, rng)
            else:
                action = policy(obs, rng)
            obs, r, done = env.step(action)
            total += r
        returns[ep] = total
    stderr = float(returns.std(ddof=1) / np.sqrt(n_episodes)) if n_episodes > 1 else 0.0
    return float(returns.mean()), stderr


def tier_masses(probs: np.ndarray, level_ids, max_tier: int) -> dict[str, float]:
    """Fold a distribution over levels into per-difficulty probability mass."""
    masses = {str(t): 0.0 for t in range(1, max_tier + 1)}
    for p, lid in zip(probs, level_ids):
        masses[str(difficulty_of(int(lid), max_tier))] += float(p)
    return masses


def _uniform_tier_masses(config: ExperimentConfig) -> dict[str, float]:
    ids = sorted(train_level_ids(config))
    return tier_masses(np.full(len(ids), 1.0 / len(ids)), ids, config.max_tier)


def run_training(config: ExperimentConfig, seed: int) -> list[dict]:
    """One full training run for one seed. Returns the metrics records."""
    out = Path(config.output_dir) / f"seed_{seed}"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)

    ss = np.random.SeedSequence(seed)
    init_rng, collect_rng, update_rng, eval_rng = (
        np.random.default_rng(s) for s in ss.spawn(4)
    )
    obs_shape = (7, grid_width(config.max_tier), 3)
    params = init_params(obs_shape, init_rng)
    opt_state = AdamState.for_params(params)
    train_ids = train_level_ids(config)
    table = None if config.baseline else ScoreTable()
    collector = Collector(
        table, None if config.baseline else config.replay, config.update,
        train_ids, config.max_tier, collect_rng, baseline=config.baseline,
    )

    records: list[dict] = []
    log_path = out / "metrics.jsonl"
    log_fh = open(log_path, "w")

    def emit(record: dict):
        records.append(record)
        log_fh.write(json.dumps(record, sort_keys=True) + "\n")
        log_fh.flush()

    def current_tier_masses() -> dict[str, float]:
        if config.baseline:
            return _uniform_tier_masses(config)
        probs = replay_distribution(table, config.replay)
        return tier_masses(probs, table.seen_levels, config.max_tier)

    steps = 0
    update = 0
    window_returns: list[float] = []
    window_difficulties: list[int] = []
    next_eval = config.eval_every
    start = time.time()

    def snapshot(diag: dict):
        mean, stderr = evaluate_policy(
            params, config.n_test_episodes,
            lambda r: draw_test_level(config, r),
            eval_rng, config.max_tier, greedy=config.eval_greedy,
        )
        counts = {str(t): 0 for t in range(1, config.max_tier + 1)}
        for d in window_difficulties:
            counts[str(d)] += 1
        n_sampled = len(window_difficulties)
        emit({
            "step": steps,
            "update": update,
            "walltime": round(time.time() - start, 3),
            "train_return_mean": float(np.mean(window_returns)) if window_returns else None,
            "train_episodes": len(window_returns),
            "test_return_mean": mean,
            "test_return_stderr": stderr,
            "mean_sampled_difficulty":
                float(np.mean(window_difficulties)) if n_sampled else None,
            "tier_mass_replay": current_tier_masses(),
            "tier_mass_sampled":
                {k: v / n_sampled for k, v in counts.items()} if n_sampled
                else {k: None for k in counts},
            "warm_start_complete": bool(table is not None and len(table) == len(train_ids)),
            "seen_levels": 0 if table is None else len(table),
            **{k: diag.get(k) for k in
               ("loss", "policy_loss", "value_loss", "entropy", "clip_fraction")},
        })
        window_returns.clear()
        window_difficulties.clear()

    diag: dict = {}
    difficulties_seen = 0
    try:
        while steps < config.total_steps:
            buffer, events = collector.collect_rollout(params)
            steps += buffer.total_steps()
            update += 1
            window_returns.extend(ev.raw_return for ev in events)
            window_difficulties.extend(collector.sampled_difficulties[difficulties_seen:])
            difficulties_seen = len(collector.sampled_difficulties)

            trajs = buffer.segments()
            advantages, targets = compute_targets(trajs, config.update)
            batch = {
                "obs": buffer.obs.reshape(-1, *obs_shape),
                "actions": buffer.actions.reshape(-1),
                "log_probs": buffer.log_probs.reshape(-1),
                "advantages": advantages,
                "value_targets": targets,
            }
            params, diag = ppo_update(params, batch, config.update, opt_state, update_rng)
            if steps >= next_eval or steps >= config.total_steps:
                snapshot(diag)
                next_eval += config.eval_every
    except NonFiniteLossError as err:
        emit({"step": steps, "update": update,
              "walltime": round(time.time() - start, 3),
              "abort": str(err), "diagnostics": err.diagnostics})
        log_fh.close()
        raise
    log_fh.close()

    save_params(params, out / "params.bin")
    if table is not None:
        table.save(out / "table.jsonl")
    write_curriculum_csv(records, out / "curriculum.csv")
    return records


def write_curriculum_csv(records: list[dict], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["update", "tier", "mass"])
        for rec in records:
            if "tier_mass_replay" not in rec:
                continue
            for tier, mass in sorted(rec["tier_mass_replay"].items()):
                writer.writerow([rec["update"], tier, f"{mass:.10f}"])


def canonical_metrics_bytes(path) -> bytes:
    """Log content with the wall-clock field removed, for byte comparison."""
    lines = []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            rec.pop("walltime", None)
            lines.append(json.dumps(rec, sort_keys=True))
    return ("\n".join(lines) + "\n").encode()


def welch_ttest(a, b) -> tuple[float, float, float]:
    """Welch's t statistic, Satterthwaite df, and two-sided p-value."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ContractViolation("need at least 2 samples per side")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = len(a), len(b)
    eps = 1e-12
    se2 = va / na + vb / nb
    t = (a.mean() - b.mean()) / np.sqrt(se2 + eps)
    if se2 < eps:
        df = float(na + nb - 2)  # degenerate variances; df formula is 0/0
    else:
        df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p_two = 2.0 * float(stats.t.sf(abs(t), df))
    return float(t), float(df), p_two


def final_test_returns(run_dir) -> list[float]:
    """Final test-return of every seed subdirectory under a run directory."""
    run_dir = Path(run_dir)
    values = []
    for sub in sorted(run_dir.glob("seed_*")):
        records = read_metrics(sub / "metrics.jsonl")
        finals = [r for r in records if "test_return_mean" in r]
        if finals:
            values.append(finals[-1]["test_return_mean"])
    return values


def read_metrics(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh]


def compare_runs(logs_a: list[list[dict]], logs_b: list[list[dict]]) -> dict:
    """Welch's t-test on final test returns of two groups of runs."""
    def finals(logs):
        out = []
        for records in logs:
            evals = [r for r in records if "test_return_mean" in r]
            if not evals:
                raise ContractViolation("a run has no evaluation records")
            out.append(evals[-1])
        return out

    fa, fb = finals(logs_a), finals(logs_b)
    schema_a = {frozenset(r.keys()) for r in fa}
    schema_b = {frozenset(r.keys()) for r in fb}
    if schema_a != schema_b:
        raise ContractViolation("metric schemas differ between the two run groups")

    a = [r["test_return_mean"] for r in fa]
    b = [r["test_return_mean"] for r in fb]
    t, df, p_two = welch_ttest(a, b)
    p_a_less = float(stats.t.cdf(t, df))
    return {
        "n_a": len(a),
        "n_b": len(b),
        "mean_a": float(np.mean(a)),
        "mean_b": float(np.mean(b)),
        "t": t,
        "df": df,
        "p_two_sided": p_two,
        "p_a_less_than_b": p_a_less,
        "p_a_greater_than_b": 1.0 - p_a_less,
        "significant_at_0.05": p_two < 0.05,
    }
