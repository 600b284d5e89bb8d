"""Treasure Game maze simulator.

The maze is a grid of 16 px cells.  The agent walks along floor rows, climbs
ladders, and interacts with levers, a key, a bolt and the treasure.  Motion
primitives displace the agent by a uniformly drawn 2-4 px, clipped at
obstacles; everything else about the world is deterministic.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

CELL = 16
INTERACT_RADIUS = 16
MIN_STEP, MAX_STEP = 2, 4

BUILTIN_MAPS = ("domain1", "domain2", "domain3", "domain4", "domain5")

MAP_CHARS = set("#.=HS@ldkbtg")


class Primitive(enum.IntEnum):
    GO_UP = 0
    GO_DOWN = 1
    GO_LEFT = 2
    GO_RIGHT = 3
    INTERACT = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, text: str) -> "Primitive":
        return cls[text.strip().upper()]


REVERSE = {
    Primitive.GO_UP: Primitive.GO_DOWN,
    Primitive.GO_DOWN: Primitive.GO_UP,
    Primitive.GO_LEFT: Primitive.GO_RIGHT,
    Primitive.GO_RIGHT: Primitive.GO_LEFT,
}


class MapError(ValueError):
    """Raised for malformed map text; carries 1-based line/column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


@dataclass
class MazeMap:
    name: str
    grid: list[str]
    links: dict[int, list[int]]
    start: tuple[int, int]  # (row, col)
    home: tuple[int, int]
    bag: tuple[int, int]
    levers: list[tuple[int, int]] = field(default_factory=list)
    doors: list[tuple[int, int]] = field(default_factory=list)
    key: tuple[int, int] | None = None
    bolt: tuple[int, int] | None = None
    treasure: tuple[int, int] | None = None
    cell: int = CELL

    @property
    def rows(self) -> int:
        return len(self.grid)

    @property
    def cols(self) -> int:
        return len(self.grid[0])

    @property
    def width(self) -> int:
        return self.cols * self.cell

    @property
    def height(self) -> int:
        return self.rows * self.cell

    @property
    def n_levers(self) -> int:
        return len(self.levers)

    @property
    def has_key(self) -> bool:
        return self.key is not None

    def px(self, rc: tuple[int, int]) -> tuple[int, int]:
        """Pixel (x, y) of a cell's top-left corner."""
        return rc[1] * self.cell, rc[0] * self.cell

    def is_ladder(self, row: int, col: int) -> bool:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            return False
        return self.grid[row][col] in "=@SH"

    # -- state layout -------------------------------------------------
    def variable_names(self) -> list[str]:
        names = ["x_agent", "y_agent"]
        names += [f"lever_{i}" for i in range(self.n_levers)]
        if self.has_key:
            names += ["x_key", "y_key", "bolt"]
        names += ["x_treasure", "y_treasure"]
        return names

    @property
    def state_size(self) -> int:
        return len(self.variable_names())

    def scale(self) -> np.ndarray:
        """Per-variable divisor that maps state values into [0, 1]."""
        out = []
        for name in self.variable_names():
            if name.startswith("x_"):
                out.append(self.width)
            elif name.startswith("y_"):
                out.append(self.height)
            else:
                out.append(1.0)
        return np.asarray(out, dtype=float)


def parse_map(text: str, name: str = "custom") -> MazeMap:
    """Parse the ASCII map format.

    Cells: ``#`` wall, ``.`` empty, ``=`` ladder, ``S`` start, ``H`` home,
    ``@`` start and home on the same ladder cell, ``l`` lever, ``d`` door,
    ``k`` key, ``b`` bolt, ``t`` treasure, ``g`` bag slot.  The grid is
    followed by a ``links:`` section of ``lever -> door[,door...]`` lines.
    """
    lines = text.splitlines()
    grid: list[str] = []
    i = 0
    while i < len(lines) and lines[i].strip() and not lines[i].strip().startswith("links"):
        grid.append(lines[i].rstrip("\n"))
        i += 1
    if not grid:
        raise MapError("empty grid", 1, 1)
    width = len(grid[0])
    for r, row in enumerate(grid):
        if len(row) != width:
            raise MapError(f"row has {len(row)} cells, expected {width}", r + 1, min(len(row), width) + 1)
        for c, ch in enumerate(row):
            if ch not in MAP_CHARS:
                raise MapError(f"unknown cell {ch!r}", r + 1, c + 1)

    links: dict[int, list[int]] = {}
    while i < len(lines) and not lines[i].strip():
        i += 1
    if i < len(lines):
        if lines[i].strip() != "links:":
            raise MapError("expected 'links:' section", i + 1, 1)
        i += 1
        pattern = re.compile(r"^\s*(\d+)\s*->\s*(\d+(?:\s*,\s*\d+)*)\s*$")
        for j in range(i, len(lines)):
            raw = lines[j]
            if not raw.strip():
                continue
            m = pattern.match(raw)
            if not m:
                raise MapError(f"bad link line {raw.strip()!r}", j + 1, 1)
            lever = int(m.group(1))
            doors = [int(d) for d in m.group(2).split(",")]
            links.setdefault(lever, []).extend(doors)

    found: dict[str, list[tuple[int, int]]] = {ch: [] for ch in "SH@ldkbtg"}
    for r, row in enumerate(grid):
        for c, ch in enumerate(row):
            if ch in found:
                found[ch].append((r, c))

    def single(chars: str, label: str) -> tuple[int, int]:
        cells = [rc for ch in chars for rc in found[ch]]
        if len(cells) != 1:
            raise MapError(f"expected exactly one {label}, found {len(cells)}")
        return cells[0]

    start = single("S@", "start")
    home = single("H@", "home")
    bag = single("g", "bag slot")
    if len(found["k"]) > 1 or len(found["b"]) > 1 or len(found["t"]) != 1:
        raise MapError("at most one key and bolt, exactly one treasure")
    if bool(found["k"]) != bool(found["b"]):
        raise MapError("a bolt requires a key and vice versa")

    levers, doors = found["l"], found["d"]
    for lever, targets in links.items():
        if lever >= len(levers):
            raise MapError(f"link references missing lever {lever}")
        for d in targets:
            if d >= len(doors):
                raise MapError(f"lever {lever} linked to missing door {d}")
    linked = {d for targets in links.values() for d in targets}
    for d in range(len(doors)):
        if d not in linked:
            raise MapError(f"door {d} is not linked to any lever")

    return MazeMap(
        name=name,
        grid=grid,
        links={k: sorted(set(v)) for k, v in links.items()},
        start=start,
        home=home,
        bag=bag,
        levers=levers,
        doors=doors,
        key=found["k"][0] if found["k"] else None,
        bolt=found["b"][0] if found["b"] else None,
        treasure=found["t"][0],
    )


def builtin_map_text(name: str) -> str:
    aliases = {f"d{i}": f"domain{i}" for i in range(1, 6)}
    name = aliases.get(name, name)
    if name not in BUILTIN_MAPS:
        raise KeyError(f"unknown built-in map {name!r}")
    return resources.files("dpa.maps").joinpath(f"{name}.txt").read_text()


def builtin_map(name: str) -> MazeMap:
    aliases = {f"d{i}": f"domain{i}" for i in range(1, 6)}
    name = aliases.get(name, name)
    return parse_map(builtin_map_text(name), name)


@dataclass
class StepResult:
    state: np.ndarray
    available: frozenset
    goal_flag: bool
    steps_cost: int = 1
    rejected: bool = False


class TreasureGame:
    """Single-agent simulator.  Not thread-safe; use one instance per thread."""

    def __init__(self, maze: MazeMap, seed: int = 0):
        self.maze = maze
        self.rng = np.random.default_rng(seed)
        names = maze.variable_names()
        self.index = {n: i for i, n in enumerate(names)}
        self._lever0 = 2
        self._blocking = self._static_blocking()
        self.state = np.zeros(len(names), dtype=float)
        self.reset()

    # -- construction helpers -----------------------------------------
    def _static_blocking(self) -> np.ndarray:
        g = self.maze.grid
        return np.array([[ch in "#g" for ch in row] for row in g], dtype=bool)

    def initial_state(self) -> np.ndarray:
        m = self.maze
        s = np.zeros(m.state_size, dtype=float)
        s[0], s[1] = m.px(m.start)
        if m.has_key:
            s[self.index["x_key"]], s[self.index["y_key"]] = m.px(m.key)
            s[self.index["bolt"]] = 0.0
        s[self.index["x_treasure"]], s[self.index["y_treasure"]] = m.px(m.treasure)
        return s

    def goal_state(self) -> np.ndarray:
        """Initial state with the treasure moved into the bag."""
        s = self.initial_state()
        s[self.index["x_treasure"]], s[self.index["y_treasure"]] = self.maze.px(self.maze.bag)
        return s

    # -- public api ------------------------------------------------------
    def reset(self) -> StepResult:
        self.state = self.initial_state()
        return self._result()

    def set_state(self, state) -> None:
        self.state = np.asarray(state, dtype=float).copy()

    def available_primitives(self) -> frozenset:
        return frozenset(p for p in Primitive if self._available(p))

    def step(self, p: Primitive) -> StepResult:
        p = Primitive(p)
        if not self._available(p):
            res = self._result()
            res.rejected = True
            return res
        s = self.state
        if p is Primitive.INTERACT:
            self._interact()
        elif p in (Primitive.GO_LEFT, Primitive.GO_RIGHT):
            step = int(self.rng.integers(MIN_STEP, MAX_STEP + 1))
            s[0] = self._slide(int(s[0]), int(s[1]), step if p is Primitive.GO_RIGHT else -step)
        else:
            step = int(self.rng.integers(MIN_STEP, MAX_STEP + 1))
            top, bottom = self._ladder_span()
            y = int(s[1]) + (step if p is Primitive.GO_DOWN else -step)
            s[1] = min(max(y, top * CELL), bottom * CELL)
        return self._result()

    def goal_reached(self) -> bool:
        return self._agent_cell() == self.maze.home and self.treasure_in_bag()

    # -- world queries -------------------------------------------------------
    def key_in_bag(self) -> bool:
        if not self.maze.has_key:
            return False
        bx, by = self.maze.px(self.maze.bag)
        return self.state[self.index["x_key"]] == bx and self.state[self.index["y_key"]] == by

    def treasure_in_bag(self) -> bool:
        bx, by = self.maze.px(self.maze.bag)
        return self.state[self.index["x_treasure"]] == bx and self.state[self.index["y_treasure"]] == by

    def bolt_open(self) -> bool:
        return bool(self.maze.has_key and self.state[self.index["bolt"]] == 1.0)

    def door_open(self, door: int) -> bool:
        pulled = 0
        for lever, doors in self.maze.links.items():
            if door in doors:
                pulled += int(self.state[self._lever0 + lever])
        return pulled % 2 == 1

    def blocked(self, row: int, col: int) -> bool:
        m = self.maze
        if not (0 <= row < m.rows and 0 <= col < m.cols):
            return True
        if self._blocking[row, col]:
            return True
        ch = m.grid[row][col]
        if ch == "d":
            return not self.door_open(m.doors.index((row, col)))
        if ch == "b":
            return not self.bolt_open()
        return False

    def _agent_cell(self) -> tuple[int, int]:
        x, y = int(self.state[0]), int(self.state[1])
        return (y + CELL // 2) // CELL, (x + CELL // 2) // CELL

    def _result(self) -> StepResult:
        return StepResult(self.state.copy(), self.available_primitives(), self.goal_reached())

    def _footprint_clear(self, x: int, y: int) -> bool:
        r0, r1 = y // CELL, (y + CELL - 1) // CELL
        c0, c1 = x // CELL, (x + CELL - 1) // CELL
        return not any(self.blocked(r, c) for r in range(r0, r1 + 1) for c in range(c0, c1 + 1))

    def _on_floor(self) -> bool:
        y = int(self.state[1])
        return y % CELL == 0

    def _slide(self, x: int, y: int, dx: int) -> int:
        unit = 1 if dx > 0 else -1
        for _ in range(abs(dx)):
            if not self._footprint_clear(x + unit, y):
                break
            x += unit
        return x

    def _ladder_span(self) -> tuple[int, int] | None:
        """Top and bottom rows of the ladder under the agent's centre column."""
        x, y = int(self.state[0]), int(self.state[1])
        col = (x + CELL // 2) // CELL
        r0, r1 = y // CELL, (y + CELL - 1) // CELL
        if not all(self.maze.is_ladder(r, col) for r in range(r0, r1 + 1)):
            return None
        top = r0
        while self.maze.is_ladder(top - 1, col):
            top -= 1
        bottom = r1
        while self.maze.is_ladder(bottom + 1, col):
            bottom += 1
        return top, bottom

    def _interaction_target(self):
        """Closest actionable object within reach, as (kind, index) or None."""
        if not self._on_floor():
            return None
        m = self.maze
        x, y = int(self.state[0]), int(self.state[1])
        row = y // CELL
        cx = x + CELL // 2
        candidates = []
        for i, (r, c) in enumerate(m.levers):
            candidates.append((r, c, "lever", i))
        if m.has_key:
            if not self.key_in_bag():
                candidates.append((*m.key, "key", 0))
            if not self.bolt_open() and self.key_in_bag():
                candidates.append((*m.bolt, "bolt", 0))
        if not self.treasure_in_bag():
            candidates.append((*m.treasure, "treasure", 0))
        best = None
        for r, c, kind, idx in candidates:
            if r != row:
                continue
            dist = abs(cx - (c * CELL + CELL // 2))
            if dist <= INTERACT_RADIUS and (best is None or dist < best[0]):
                best = (dist, kind, idx)
        return None if best is None else best[1:]

    def _available(self, p: Primitive) -> bool:
        x, y = int(self.state[0]), int(self.state[1])
        if p is Primitive.INTERACT:
            return self._interaction_target() is not None
        if p in (Primitive.GO_LEFT, Primitive.GO_RIGHT):
            if not self._on_floor():
                return False
            unit = 1 if p is Primitive.GO_RIGHT else -1
            return self._footprint_clear(x + unit, y)
        span = self._ladder_span()
        if span is None:
            return False
        top, bottom = span
        if p is Primitive.GO_UP:
            return y > top * CELL
        return y < bottom * CELL

    def _interact(self) -> None:
        kind, idx = self._interaction_target()
        s, m = self.state, self.maze
        bx, by = m.px(m.bag)
        if kind == "lever":
            s[self._lever0 + idx] = 1.0 - s[self._lever0 + idx]
        elif kind == "key":
            s[self.index["x_key"]], s[self.index["y_key"]] = bx, by
        elif kind == "bolt":
            s[self.index["bolt"]] = 1.0
        elif kind == "treasure":
            s[self.index["x_treasure"]], s[self.index["y_treasure"]] = bx, by


def load_map(map_text: str, rng_seed: int = 0, name: str = "custom") -> TreasureGame:
    """Build an environment from map text or a built-in name (``domain1``..``domain5``)."""
    stripped = map_text.strip()
    if stripped in BUILTIN_MAPS or re.fullmatch(r"d[1-5]", stripped):
        return TreasureGame(builtin_map(stripped), rng_seed)
    return TreasureGame(parse_map(map_text, name), rng_seed)
