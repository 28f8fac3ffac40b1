import numpy as np
import pytest

from replaylab.errors import ContractViolation
from replaylab.sampler import (
    ReplayConfig,
    ScoreTable,
    replay_distribution,
    sample_next_level,
    score_distribution,
    staleness_distribution,
    update_level_score,
)
from replaylab.scoring import PartialScore


def table_with(scores, timestamps=None, counter=None):
    n = len(scores)
    timestamps = [0] * n if timestamps is None else list(timestamps)
    counter = max(timestamps, default=0) if counter is None else counter
    return ScoreTable(
        seen_levels=list(range(n)),
        scores=list(scores),
        partial=[None] * n,
        timestamps=timestamps,
        episode_counter=counter,
    )


def random_table(rng, max_levels=30):
    n = int(rng.integers(1, max_levels))
    counter = int(rng.integers(0, 100))
    return table_with(
        scores=rng.normal(size=n).tolist(),
        timestamps=rng.integers(0, counter + 1, size=n).tolist(),
        counter=counter,
    )


class TestScoreDistribution:
    def test_rank_beta_one(self):
        dist = score_distribution(table_with([0.5, 2.0, 1.0]), ReplayConfig(beta=1.0))
        assert dist.probs == pytest.approx([2 / 11, 6 / 11, 3 / 11])
        assert not dist.uniform_fallback

    def test_rank_beta_half(self):
        dist = score_distribution(table_with([0.5, 2.0, 1.0]), ReplayConfig(beta=0.5))
        assert dist.probs == pytest.approx([4 / 49, 36 / 49, 9 / 49])

    def test_proportional(self):
        cfg = ReplayConfig(prioritization="proportional", beta=1.0)
        dist = score_distribution(table_with([0.5, 2.0, 1.0]), cfg)
        assert dist.probs == pytest.approx([1 / 7, 4 / 7, 2 / 7])

    @pytest.mark.parametrize("prioritization", ["rank", "proportional"])
    @pytest.mark.parametrize("c", [0.3, 1.0, 7.5])
    def test_equal_scores_uniform(self, prioritization, c):
        cfg = ReplayConfig(prioritization=prioritization, beta=0.7)
        dist = score_distribution(table_with([c, c, c]), cfg)
        assert dist.probs == pytest.approx([1 / 3, 1 / 3, 1 / 3])

    def test_greedy_puts_all_mass_on_max(self):
        cfg = ReplayConfig(prioritization="greedy")
        dist = score_distribution(table_with([0.5, 2.0, 1.0]), cfg)
        assert dist.probs.tolist() == [0.0, 1.0, 0.0]

    def test_greedy_tie_lowest_index(self):
        cfg = ReplayConfig(prioritization="greedy")
        dist = score_distribution(table_with([2.0, 2.0, 1.0]), cfg)
        assert dist.probs.tolist() == [1.0, 0.0, 0.0]

    def test_proportional_all_zero_falls_back_uniform(self):
        cfg = ReplayConfig(prioritization="proportional")
        dist = score_distribution(table_with([0.0, 0.0]), cfg)
        assert dist.uniform_fallback
        assert dist.probs == pytest.approx([0.5, 0.5])

    def test_proportional_negative_falls_back_uniform(self):
        cfg = ReplayConfig(prioritization="proportional")
        dist = score_distribution(table_with([0.5, -0.1, 1.0]), cfg)
        assert dist.uniform_fallback
        assert dist.probs == pytest.approx([1 / 3, 1 / 3, 1 / 3])

    def test_rank_handles_negative_scores(self):
        dist = score_distribution(table_with([-1.0, -3.0, -2.0]), ReplayConfig(beta=1.0))
        assert dist.probs == pytest.approx([6 / 11, 2 / 11, 3 / 11])

    def test_rank_monotone_transform_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            scores = rng.normal(size=8)
            a = score_distribution(table_with(scores), ReplayConfig(beta=0.4))
            b = score_distribution(table_with(np.exp(scores) + 3), ReplayConfig(beta=0.4))
            assert a.probs == pytest.approx(b.probs, abs=1e-12)

    @pytest.mark.parametrize("prioritization", ["rank", "proportional", "greedy"])
    def test_tiny_beta_concentrates_on_argmax(self, prioritization):
        cfg = ReplayConfig(prioritization=prioritization, beta=1e-3)
        dist = score_distribution(table_with([0.2, 0.9, 0.5, 0.1]), cfg)
        if prioritization == "greedy":
            assert dist.probs[1] == 1.0
        else:
            assert dist.probs[1] >= 0.99

    @pytest.mark.parametrize("prioritization", ["rank", "proportional"])
    def test_monotonicity_in_own_score(self, prioritization):
        cfg = ReplayConfig(prioritization=prioritization, beta=0.5)
        others = [0.3, 0.8, 0.5]
        prev = -1.0
        for s in (0.1, 0.3, 0.6, 0.8, 1.2):
            p = score_distribution(table_with([s] + others), cfg).probs[0]
            assert p >= prev - 1e-12
            prev = p

    def test_nonfinite_scores_rejected(self):
        with pytest.raises(ContractViolation):
            score_distribution(table_with([1.0, np.nan]), ReplayConfig())

    def test_empty_table_rejected(self):
        with pytest.raises(ContractViolation):
            score_distribution(table_with([]), ReplayConfig())


class TestStalenessDistribution:
    def test_hand_example(self):
        table = table_with([0, 0, 0], timestamps=[2, 4, 8], counter=10)
        assert staleness_distribution(table) == pytest.approx([0.5, 0.375, 0.125])

    def test_zero_staleness_uniform(self):
        table = table_with([0, 0], timestamps=[5, 5], counter=5)
        assert staleness_distribution(table) == pytest.approx([0.5, 0.5])

    def test_single_level(self):
        table = table_with([0], timestamps=[0], counter=1)
        assert staleness_distribution(table) == pytest.approx([1.0])

    def test_counter_behind_timestamp_rejected(self):
        table = table_with([0], timestamps=[3], counter=2)
        with pytest.raises(ContractViolation):
            staleness_distribution(table)


class TestReplayDistribution:
    def test_hand_mixture(self):
        table = table_with([0.5, 2.0, 1.0], timestamps=[2, 4, 8], counter=10)
        cfg = ReplayConfig(beta=1.0, rho=0.1)
        expected = 0.9 * np.array([2 / 11, 6 / 11, 3 / 11]) + 0.1 * np.array([0.5, 0.375, 0.125])
        assert replay_distribution(table, cfg) == pytest.approx(expected)
        assert replay_distribution(table, cfg)[0] == pytest.approx(0.21363636363636362)

    def test_rho_zero_is_score_only(self):
        table = table_with([0.5, 2.0, 1.0], timestamps=[2, 4, 8], counter=10)
        cfg = ReplayConfig(beta=1.0, rho=0.0)
        assert replay_distribution(table, cfg) == pytest.approx([2 / 11, 6 / 11, 3 / 11])

    def test_rho_one_is_staleness_only(self):
        table = table_with([0.5, 2.0, 1.0], timestamps=[2, 4, 8], counter=10)
        cfg = ReplayConfig(beta=1.0, rho=1.0)
        assert replay_distribution(table, cfg) == pytest.approx([0.5, 0.375, 0.125])

    def test_property_valid_distributions(self):
        # Any random table must yield valid probability vectors from all three ops.
        rng = np.random.default_rng(1)
        configs = [
            ReplayConfig(prioritization=p, beta=b, rho=r)
            for p in ("rank", "proportional", "greedy")
            for b in (0.01, 0.1, 1.0, 2.0)
            for r in (0.0, 0.3, 1.0)
        ]
        for i in range(1000):
            table = random_table(rng)
            cfg = configs[i % len(configs)]
            for probs in (
                score_distribution(table, cfg).probs,
                staleness_distribution(table),
                replay_distribution(table, cfg),
            ):
                assert len(probs) == len(table)
                assert (probs >= 0).all() and (probs <= 1 + 1e-12).all()
                assert probs.sum() == pytest.approx(1.0, abs=1e-9)


class TestSampleNextLevel:
    def test_warm_start_visits_all_levels_once(self):
        rng = np.random.default_rng(2)
        table = ScoreTable()
        train = set(range(50))
        cfg = ReplayConfig()
        picked = []
        for _ in range(50):
            lid, was_new = sample_next_level(table, cfg, train, rng)
            assert was_new
            picked.append(lid)
        assert sorted(picked) == sorted(train)
        assert table.episode_counter == 50

    def test_warm_start_prefers_unseen_while_any_remain(self):
        rng = np.random.default_rng(3)
        table = ScoreTable()
        train = set(range(200))
        cfg = ReplayConfig()
        for i in range(150):
            _, was_new = sample_next_level(table, cfg, train, rng)
            assert was_new
        assert len(table) == 150
        lid, was_new = sample_next_level(table, cfg, train, rng)
        assert was_new and lid not in set(list(table.seen_levels)[:150])

    def test_exhausted_train_set_never_new(self):
        rng = np.random.default_rng(4)
        table = ScoreTable()
        train = set(range(10))
        cfg = ReplayConfig(replay_prob=0.5)
        for _ in range(10):
            sample_next_level(table, cfg, train, rng)
        for i, lid in enumerate(table.seen_levels):
            update_level_score(table, i, float(i + 1))
        for _ in range(30):
            lid, was_new = sample_next_level(table, cfg, train, rng)
            assert not was_new
            assert lid in train

    def test_replay_prob_mixes_new_and_replay(self):
        # warm_start off: half the draws should explore while unseen levels remain.
        rng = np.random.default_rng(5)
        table = ScoreTable()
        cfg = ReplayConfig(warm_start=False, replay_prob=0.5)
        train = set(range(1000))
        sample_next_level(table, cfg, train, rng)  # first call must be new
        news = sum(sample_next_level(table, cfg, train, rng)[1] for _ in range(500))
        assert 200 <= news <= 300

    def test_sampled_level_has_zero_staleness(self):
        rng = np.random.default_rng(6)
        table = table_with([1.0, 2.0, 3.0], timestamps=[1, 2, 3], counter=5)
        cfg = ReplayConfig(rho=0.5)
        lid, _ = sample_next_level(table, cfg, {0, 1, 2}, rng)
        idx = table.seen_levels.index(lid)
        assert staleness_distribution(table)[idx] == 0.0

    def test_determinism_on_cloned_tables(self):
        base = table_with([0.4, 1.2, 0.8, 2.0], timestamps=[1, 3, 2, 4], counter=6)
        cfg = ReplayConfig(rho=0.3, beta=0.2)
        out = []
        for _ in range(2):
            table = base.copy()
            rng = np.random.default_rng(99)
            out.append([sample_next_level(table, cfg, set(range(4)), rng) for _ in range(20)])
        assert out[0] == out[1]

    def test_empty_train_set_rejected(self):
        with pytest.raises(ContractViolation):
            sample_next_level(ScoreTable(), ReplayConfig(), set(), np.random.default_rng(0))

    def test_greedy_always_picks_max(self):
        rng = np.random.default_rng(7)
        table = table_with([0.1, 5.0, 0.2], timestamps=[1, 1, 1], counter=1)
        cfg = ReplayConfig(prioritization="greedy", rho=0.0)
        for _ in range(10):
            lid, _ = sample_next_level(table, cfg, {0, 1, 2}, rng)
            assert lid == 1


class TestScoreUpdates:
    def test_update_and_overwrite(self):
        table = table_with([0.0, 0.0])
        update_level_score(table, 0, 0.7)
        assert table.scores[0] == 0.7
        update_level_score(table, 0, 0.2)
        assert table.scores[0] == 0.2

    def test_update_clears_partial(self):
        table = table_with([0.0])
        table.set_partial(0, PartialScore(0.3, 12))
        update_level_score(table, 0, 0.9)
        assert table.partial[0] is None

    def test_out_of_range_rejected(self):
        table = table_with([0.0])
        with pytest.raises(ContractViolation):
            update_level_score(table, 1, 0.5)
        with pytest.raises(ContractViolation):
            update_level_score(table, -1, 0.5)

    def test_nonfinite_score_rejected(self):
        table = table_with([0.0])
        with pytest.raises(ContractViolation):
            update_level_score(table, 0, float("nan"))


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        table = table_with([0.5, 1.5], timestamps=[2, 7], counter=9)
        table.set_partial(1, PartialScore(0.25, 40))
        path = tmp_path / "table.jsonl"
        table.save(path)
        loaded = ScoreTable.load(path)
        assert loaded == table

    def test_roundtrip_preserves_sampling(self, tmp_path):
        rng = np.random.default_rng(8)
        table = ScoreTable()
        cfg = ReplayConfig()
        train = set(range(20))
        for _ in range(25):
            lid, new = sample_next_level(table, cfg, train, rng)
            if not new:
                update_level_score(table, table.index_of(lid), rng.random())
        path = tmp_path / "table.jsonl"
        table.save(path)
        loaded = ScoreTable.load(path)
        a = sample_next_level(table.copy(), cfg, train, np.random.default_rng(1))
        b = sample_next_level(loaded, cfg, train, np.random.default_rng(1))
        assert a == b


class TestReplayConfigValidation:
    def test_bad_values_rejected(self):
        with pytest.raises(ContractViolation):
            ReplayConfig(beta=0.0)
        with pytest.raises(ContractViolation):
            ReplayConfig(rho=1.5)
        with pytest.raises(ContractViolation):
            ReplayConfig(replay_prob=-0.1)
        with pytest.raises(ContractViolation):
            ReplayConfig(metric="novelty")
        with pytest.raises(ContractViolation):
            ReplayConfig(prioritization="softmax")
