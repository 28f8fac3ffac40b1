"""ChainMaze: a deterministic multi-room gridworld with difficulty tiers.

A level is generated entirely from a 64-bit seed. It consists of ``rooms``
5x5 rooms laid out in a row, adjacent rooms joined by a single door in the
shared wall. The agent starts in the first room and must reach a goal cell
in the last room; the number of rooms is the level's difficulty tier.

Cell type codes (observation channel 0):
    0 wall, 1 floor, 2 door, 3 start, 4 goal
Cell state codes (channel 1): 0 default, 1 opened door.
Channel 2 marks the agent's cell with 1.

Doors open on touch: attempting to move into a closed door opens it but
costs the step; once open the door behaves as floor.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from replaylab.errors import ContractViolation
from replaylab.prng import SplitMix64

WALL = 0
FLOOR = 1
DOOR = 2
START = 3
GOAL = 4

ROOM_SIZE = 5
GRID_HEIGHT = ROOM_SIZE + 2

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
ACTIONS = (UP, DOWN, LEFT, RIGHT)
_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1))

# Episode budget per room, matching the usual gridworld step-limit convention.
STEPS_PER_ROOM = 64

_RENDER_CHARS = {WALL: "#", FLOOR: ".", DOOR: "+", START: "S", GOAL: "G"}


def grid_width(rooms: int) -> int:
    return (ROOM_SIZE + 1) * rooms + 1


@dataclass(frozen=True, eq=False)
class LevelSpec:
    """Immutable description of one generated level."""

    seed: int
    rooms: int
    width: int
    height: int
    grid: np.ndarray = field(repr=False)
    start: tuple[int, int]
    goal: tuple[int, int]
    doors: tuple[tuple[int, int], ...]

    @property
    def difficulty(self) -> int:
        return self.rooms

    @property
    def max_steps(self) -> int:
        return STEPS_PER_ROOM * self.rooms

    def spec_hash(self) -> str:
        """Stable content hash, for golden tests and cross-platform checks."""
        h = hashlib.sha256()
        h.update(self.seed.to_bytes(8, "little"))
        h.update(bytes([self.rooms, self.height]))
        h.update(self.width.to_bytes(2, "little"))
        h.update(np.ascontiguousarray(self.grid, dtype=np.int8).tobytes())
        h.update(bytes(self.start) + bytes(self.goal))
        return h.hexdigest()


def _room_interior_columns(room: int) -> range:
    left = (ROOM_SIZE + 1) * room + 1
    return range(left, left + ROOM_SIZE)


def _build_grid(rooms, doors, start, goal) -> np.ndarray:
    grid = np.full((GRID_HEIGHT, grid_width(rooms)), WALL, dtype=np.int8)
    for room in range(rooms):
        cols = _room_interior_columns(room)
        grid[1 : 1 + ROOM_SIZE, cols.start : cols.stop] = FLOOR
    for r, c in doors:
        grid[r, c] = DOOR
    grid[start] = START
    grid[goal] = GOAL
    return grid


def reachable(grid: np.ndarray, start: tuple[int, int], goal: tuple[int, int]) -> bool:
    """Flood fill over non-wall cells; doors count as passable."""
    height, width = grid.shape
    seen = np.zeros(grid.shape, dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        r, c = stack.pop()
        if (r, c) == goal:
            return True
        for dr, dc in _DELTAS:
            nr, nc = r + dr, c + dc
            if 0 <= nr < height and 0 <= nc < width and not seen[nr, nc] and grid[nr, nc] != WALL:
                seen[nr, nc] = True
                stack.append((nr, nc))
    return False


def generate_level(seed: int, max_tier: int) -> LevelSpec:
    """Generate the level for ``seed``. Same seed, same level, any platform.

    All randomness comes from one splitmix64 stream seeded by ``seed``; the
    draw order (room count, doors left to right, start, goal) is fixed.
    """
    if not 1 <= max_tier <= 4:
        raise ContractViolation(f"max_tier must be in [1, 4], got {max_tier}")
    stream = SplitMix64(seed)
    rooms = 1 + stream.randrange(max_tier)

    for _ in range(100):
        doors = tuple(
            (1 + stream.randrange(ROOM_SIZE), (ROOM_SIZE + 1) * (room + 1))
            for room in range(rooms - 1)
        )
        start = (1 + stream.randrange(ROOM_SIZE), 1 + stream.randrange(ROOM_SIZE))
        goal_left = (ROOM_SIZE + 1) * (rooms - 1) + 1
        goal = (1 + stream.randrange(ROOM_SIZE), goal_left + stream.randrange(ROOM_SIZE))
        attempts = 0
        while goal == start and attempts < 100:
            goal = (1 + stream.randrange(ROOM_SIZE), goal_left + stream.randrange(ROOM_SIZE))
            attempts += 1
        if goal == start:
            continue
        grid = _build_grid(rooms, doors, start, goal)
        if reachable(grid, start, goal):
            grid.setflags(write=False)
            return LevelSpec(
                seed=seed,
                rooms=rooms,
                width=grid.shape[1],
                height=GRID_HEIGHT,
                grid=grid,
                start=start,
                goal=goal,
                doors=doors,
            )
    raise ContractViolation(f"could not generate a reachable level for seed {seed}")


def difficulty_of(seed: int, max_tier: int) -> int:
    """Difficulty tier of a level without building its grid.

    Evaluation-side convenience; equals ``generate_level(seed, max_tier).difficulty``.
    """
    if not 1 <= max_tier <= 4:
        raise ContractViolation(f"max_tier must be in [1, 4], got {max_tier}")
    return 1 + SplitMix64(seed).randrange(max_tier)


class ChainMaze:
    """Steppable environment over generated levels.

    Observations are (GRID_HEIGHT, grid_width(max_tier), 3) int8 arrays,
    padded with walls so one network serves every tier.
    """

    def __init__(self, max_tier: int = 4):
        if not 1 <= max_tier <= 4:
            raise ContractViolation(f"max_tier must be in [1, 4], got {max_tier}")
        self.max_tier = max_tier
        self.obs_height = GRID_HEIGHT
        self.obs_width = grid_width(max_tier)
        self._spec: LevelSpec | None = None
        self._obs = np.zeros(self.obs_shape, dtype=np.int8)
        self._done = True

    @property
    def obs_shape(self) -> tuple[int, int, int]:
        return (self.obs_height, self.obs_width, 3)

    @property
    def spec(self) -> LevelSpec:
        if self._spec is None:
            raise ContractViolation("reset() has not been called")
        return self._spec

    @property
    def steps_taken(self) -> int:
        return self._steps

    def reset(self, spec: LevelSpec) -> np.ndarray:
        if spec.width > self.obs_width:
            raise ContractViolation(
                f"level of width {spec.width} does not fit obs width {self.obs_width}"
            )
        self._spec = spec
        self._agent = spec.start
        self._steps = 0
        self._done = False
        self._obs.fill(0)
        self._obs[: spec.height, : spec.width, 0] = spec.grid
        self._obs[spec.start[0], spec.start[1], 2] = 1
        return self._obs.copy()

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        if self._done:
            raise ContractViolation("step() called on a finished episode")
        if action not in ACTIONS:
            raise ContractViolation(f"invalid action {action}")
        spec = self.spec
        self._steps += 1

        dr, dc = _DELTAS[action]
        r, c = self._agent
        nr, nc = r + dr, c + dc
        cell = spec.grid[nr, nc] if (0 <= nr < spec.height and 0 <= nc < spec.width) else WALL
        if cell == DOOR and self._obs[nr, nc, 1] == 0:
            self._obs[nr, nc, 1] = 1  # touch opens the door; the step is spent
        elif cell != WALL:
            self._obs[r, c, 2] = 0
            self._obs[nr, nc, 2] = 1
            self._agent = (nr, nc)

        reward = 0.0
        if self._agent == spec.goal:
            self._done = True
            reward = 1.0 - 0.9 * (self._steps / spec.max_steps)
        elif self._steps >= spec.max_steps:
            self._done = True
        return self._obs.copy(), reward, self._done

    def render_ascii(self) -> str:
        return render_ascii(self.spec, agent=self._agent, obs=self._obs)


def render_ascii(spec: LevelSpec, agent=None, obs=None) -> str:
    """Debug rendering: '#' wall, '.' floor, '+' door ('o' once open), S/G/A."""
    rows = []
    for r in range(spec.height):
        chars = []
        for c in range(spec.width):
            cell = spec.grid[r, c]
            ch = _RENDER_CHARS[cell]
            if cell == DOOR and obs is not None and obs[r, c, 1]:
                ch = "o"
            if agent is not None and (r, c) == tuple(agent):
                ch = "A"
            chars.append(ch)
        rows.append("".join(chars))
    return "\n".join(rows)


def shortest_solution(spec: LevelSpec) -> list[int]:
    """Action sequence of minimal length from start to goal.

    Entering a closed door costs two actions (the opening touch plus the
    move), which the returned sequence encodes by repeating the action.
    """
    import heapq

    start, goal = spec.start, spec.goal
    dist = {start: 0}
    prev: dict[tuple[int, int], tuple[tuple[int, int], int]] = {}
    heap = [(0, start)]
    while heap:
        d, pos = heapq.heappop(heap)
        if pos == goal:
            break
        if d > dist.get(pos, float("inf")):
            continue
        r, c = pos
        for action, (dr, dc) in enumerate(_DELTAS):
            nr, nc = r + dr, c + dc
            if not (0 <= nr < spec.height and 0 <= nc < spec.width):
                continue
            cell = spec.grid[nr, nc]
            if cell == WALL:
                continue
            cost = 2 if cell == DOOR else 1
            nd = d + cost
            if nd < dist.get((nr, nc), float("inf")):
                dist[(nr, nc)] = nd
                prev[(nr, nc)] = (pos, action)
                heapq.heappush(heap, (nd, (nr, nc)))
    if goal not in dist:
        raise ContractViolation("goal unreachable")

    actions: list[int] = []
    pos = goal
    while pos != start:
        parent, action = prev[pos]
        actions.append(action)
        if spec.grid[pos] == DOOR:
            actions.append(action)  # the opening touch
        pos = parent
    actions.reverse()
    return actions
