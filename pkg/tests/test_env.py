import numpy as np
import pytest

from replaylab.env import (
    DOOR,
    GOAL,
    START,
    WALL,
    ChainMaze,
    LevelSpec,
    difficulty_of,
    generate_level,
    grid_width,
    reachable,
    render_ascii,
    shortest_solution,
)
from replaylab.errors import ContractViolation
from replaylab.prng import SplitMix64, splitmix64

# Published reference outputs of the splitmix64 generator.
SPLITMIX_GOLDEN = {
    0: [
        16294208416658607535,
        7960286522194355700,
        487617019471545679,
        17909611376780542444,
    ],
    42: [
        13679457532755275413,
        2949826092126892291,
        5139283748462763858,
        6349198060258255764,
    ],
    0x123456789ABCDEF: [
        1547611027431991965,
        15380727978956804243,
        3427440727199435966,
        11733030637320693740,
    ],
}

# Frozen level layouts (seed -> rooms, start, goal, doors, sha256 of the spec).
LEVEL_GOLDEN = {
    0: (4, (3, 1), (4, 19), ((1, 6), (5, 12), (5, 18)),
        "cd875bc81137ee9c41c9e7e313668912b8a16930e65dc76de698d28e6a0acd5d"),
    1: (2, (1, 1), (2, 10), ((5, 6),),
        "3ff28c0d78c2a51362aaf46924ed520bc5212aa72f99cc75dc95a111b5c6bf64"),
    2: (3, (2, 5), (5, 15), ((2, 6), (2, 12)),
        "3e6e5a76a8fd9ba48badbbf68908b383cc62cb521472c9ca419b40e2b7807e1e"),
    7: (4, (5, 1), (4, 21), ((5, 6), (2, 12), (4, 18)),
        "3377f4ab1bcac5af82714d5a19d0c50972746ce8d3c749e643003114706f26b8"),
    42: (2, (4, 5), (1, 9), ((2, 6),),
        "e64953ef2c59f6618fa98d4fa44e07abf9cf6e1b6db43b04d762fc6052d18736"),
}


class TestSplitMix64:
    @pytest.mark.parametrize("seed", sorted(SPLITMIX_GOLDEN))
    def test_reference_outputs(self, seed):
        stream = SplitMix64(seed)
        assert [stream.next_u64() for _ in range(4)] == SPLITMIX_GOLDEN[seed]

    def test_functional_form_agrees(self):
        state = 42
        stream = SplitMix64(42)
        for _ in range(10):
            state, out = splitmix64(state)
            assert out == stream.next_u64()

    def test_seed_wraps_to_64_bits(self):
        assert SplitMix64(2**64).next_u64() == SPLITMIX_GOLDEN[0][0]

    def test_randrange_bounds(self):
        stream = SplitMix64(123)
        draws = [stream.randrange(5) for _ in range(1000)]
        assert min(draws) == 0 and max(draws) == 4
        with pytest.raises(ValueError):
            stream.randrange(0)


class TestGeneration:
    @pytest.mark.parametrize("seed", sorted(LEVEL_GOLDEN))
    def test_frozen_levels(self, seed):
        rooms, start, goal, doors, digest = LEVEL_GOLDEN[seed]
        spec = generate_level(seed, max_tier=4)
        assert spec.rooms == rooms
        assert spec.start == start
        assert spec.goal == goal
        assert spec.doors == doors
        assert spec.spec_hash() == digest

    def test_same_seed_same_level(self):
        a = generate_level(991, 4)
        b = generate_level(991, 4)
        assert a.spec_hash() == b.spec_hash()
        assert np.array_equal(a.grid, b.grid)

    def test_difficulty_matches_room_count(self):
        for seed in range(50):
            spec = generate_level(seed, 4)
            assert spec.difficulty == spec.rooms == difficulty_of(seed, 4)

    def test_tier_frequencies_near_uniform(self):
        tiers = np.array([difficulty_of(s, 4) for s in range(10_000)])
        for t in (1, 2, 3, 4):
            assert 0.22 <= np.mean(tiers == t) <= 0.28

    def test_max_tier_one_always_single_room(self):
        assert all(difficulty_of(s, 1) == 1 for s in range(100))

    def test_geometry_invariants(self):
        for seed in range(100):
            spec = generate_level(seed, 4)
            assert spec.height == 7
            assert spec.width == grid_width(spec.rooms) == 6 * spec.rooms + 1
            assert len(spec.doors) == spec.rooms - 1
            # Outer border is solid wall.
            assert (spec.grid[0] == WALL).all() and (spec.grid[-1] == WALL).all()
            assert (spec.grid[:, 0] == WALL).all() and (spec.grid[:, -1] == WALL).all()
            assert spec.grid[spec.start] == START
            assert spec.grid[spec.goal] == GOAL
            # Goal sits in the last room, start in the first.
            assert 1 <= spec.start[1] <= 5
            assert spec.width - 6 <= spec.goal[1] <= spec.width - 2
            assert (spec.grid == DOOR).sum() == len(spec.doors)

    def test_all_levels_solvable(self):
        for seed in range(500):
            spec = generate_level(seed, 4)
            assert reachable(spec.grid, spec.start, spec.goal)
            assert len(shortest_solution(spec)) <= spec.max_steps

    def test_grid_is_readonly(self):
        spec = generate_level(3, 4)
        with pytest.raises(ValueError):
            spec.grid[1, 1] = WALL

    def test_max_tier_validated(self):
        with pytest.raises(ContractViolation):
            generate_level(0, 0)
        with pytest.raises(ContractViolation):
            difficulty_of(0, 5)


class TestEpisodes:
    def test_solver_reward_matches_formula(self):
        env = ChainMaze(max_tier=4)
        for seed in range(100):
            spec = generate_level(seed, 4)
            actions = shortest_solution(spec)
            env.reset(spec)
            total, done = 0.0, False
            for a in actions:
                assert not done
                _, r, done = env.step(a)
                total += r
            assert done
            assert total == pytest.approx(1.0 - 0.9 * len(actions) / spec.max_steps)

    def test_timeout_gives_zero_reward(self):
        env = ChainMaze(max_tier=1)
        spec = next(
            generate_level(s, 1) for s in range(2000) if generate_level(s, 1).start[1] == 1
        )
        env.reset(spec)
        done, steps = False, 0
        while not done:
            _, r, done = env.step(2)  # LEFT into the wall forever
            steps += 1
            assert r == 0.0
        assert steps == spec.max_steps == 64

    def test_one_room_adjacent_goal(self):
        # Hand-built level: goal one step right of start, reached in 1 of 64 steps.
        from replaylab.env import _build_grid

        start, goal = (3, 2), (3, 3)
        grid = _build_grid(1, (), start, goal)
        spec = LevelSpec(
            seed=0, rooms=1, width=7, height=7, grid=grid, start=start, goal=goal, doors=()
        )
        env = ChainMaze(max_tier=1)
        env.reset(spec)
        _, r, done = env.step(3)
        assert done
        assert r == pytest.approx(1.0 - 0.9 * (1 / 64))

    def test_closed_door_costs_a_step(self):
        # Find a level whose solution repeats an action (the door touch).
        env = ChainMaze(max_tier=4)
        for seed in range(200):
            spec = generate_level(seed, 4)
            if spec.rooms < 2:
                continue
            actions = shortest_solution(spec)
            env.reset(spec)
            door = spec.doors[0]
            # Walk until the step just before the first door.
            opened = False
            for a in actions:
                obs, _, done = env.step(a)
                if obs[door[0], door[1], 1] == 1 and not opened:
                    opened = True
                    # Agent has not moved through yet: door cell has no agent mark
                    # on the opening touch itself unless it stepped in afterwards.
                assert not done or a is actions[-1]
            assert opened
            break

    def test_door_touch_does_not_move_agent(self):
        env = ChainMaze(max_tier=4)
        spec = next(generate_level(s, 4) for s in range(100) if generate_level(s, 4).rooms >= 2)
        env.reset(spec)
        door = spec.doors[0]
        # Navigate the agent to the cell left of the door deterministically.
        target = (door[0], door[1] - 1)
        path_spec = LevelSpec(
            seed=spec.seed, rooms=spec.rooms, width=spec.width, height=spec.height,
            grid=spec.grid, start=spec.start, goal=target, doors=spec.doors,
        )
        for a in shortest_solution(path_spec):
            obs, _, _ = env.step(a)
        assert obs[target[0], target[1], 2] == 1
        obs, r, done = env.step(3)  # RIGHT into the closed door
        assert obs[door[0], door[1], 1] == 1  # now open
        assert obs[target[0], target[1], 2] == 1  # agent stayed put
        assert r == 0.0 and not done
        obs, _, _ = env.step(3)  # second RIGHT passes through
        assert obs[door[0], door[1], 2] == 1

    def test_observation_shape_and_padding(self):
        env = ChainMaze(max_tier=4)
        spec = next(generate_level(s, 4) for s in range(100) if generate_level(s, 4).rooms == 1)
        obs = env.reset(spec)
        assert obs.shape == (7, 25, 3)
        assert obs.dtype == np.int8
        assert (obs[:, spec.width :, 0] == WALL).all()
        assert obs[:, :, 2].sum() == 1

    def test_step_determinism(self):
        spec = generate_level(11, 4)
        actions = shortest_solution(spec)
        runs = []
        for _ in range(2):
            env = ChainMaze(max_tier=4)
            env.reset(spec)
            trace = [env.step(a) for a in actions]
            runs.append(trace)
        for (o1, r1, d1), (o2, r2, d2) in zip(*runs):
            assert np.array_equal(o1, o2) and r1 == r2 and d1 == d2

    def test_step_after_done_raises(self):
        env = ChainMaze(max_tier=4)
        spec = generate_level(5, 4)
        env.reset(spec)
        for a in shortest_solution(spec):
            env.step(a)
        with pytest.raises(ContractViolation):
            env.step(0)

    def test_invalid_action_raises(self):
        env = ChainMaze(max_tier=4)
        env.reset(generate_level(5, 4))
        with pytest.raises(ContractViolation):
            env.step(4)

    def test_render_has_level_dimensions(self):
        spec = generate_level(7, 4)
        lines = render_ascii(spec).splitlines()
        assert len(lines) == spec.height
        assert all(len(line) == spec.width for line in lines)
        assert sum(line.count("S") for line in lines) == 1
        assert sum(line.count("G") for line in lines) == 1
