"""2D grid maps compiled into tasks (deterministic-connected and swamp/jump variants)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Dict, List, Optional, Sequence, Tuple

from valueramp.core import VALUE_CAP, ValueFunction
from valueramp.task import (
    TaskModel,
    escape_failures,
    is_connected,
    is_deterministic,
    is_restartable,
    reducibility,
)

WALL, FREE, START, GOAL, SWAMP, JUMP = "#", ".", "S", "G", "X", "J"
CELL_CHARS = {WALL, FREE, START, GOAL, SWAMP, JUMP}

ACTIONS = ("left", "right", "up", "down", "finish")
DIRECTIONS = {"left": (-1, 0), "right": (1, 0), "up": (0, -1), "down": (0, 1)}
SWAMP_OFFSETS = ((0, 0), (-1, 0), (1, 0), (0, 1), (0, -1))

Cell = Tuple[int, int]


class MapError(ValueError):
    pass


@dataclass(frozen=True)
class GridMap:
    """Rows of cell characters; (x, y) with origin top-left, y downward."""

    rows: Tuple[str, ...]
    goals: Dict[Cell, int] = field(hash=False)
    variant: str = "dc"

    @property
    def width(self) -> int:
        return len(self.rows[0])

    @property
    def height(self) -> int:
        return len(self.rows)

    def kind(self, x: int, y: int) -> str:
        if not (0 <= x < self.width and 0 <= y < self.height):
            return WALL
        return self.rows[y][x]

    def open_cells(self) -> List[Cell]:
        """Non-wall cells in row-major order; this is the state numbering."""
        return [
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if self.rows[y][x] != WALL
        ]

    def cells_of(self, kind: str) -> List[Cell]:
        return [c for c in self.open_cells() if self.kind(*c) == kind]


@dataclass(frozen=True)
class GridSemantics:
    variant: str = "dc"
    # None samples uniformly over the successor set
    swamp_restart_probability: Optional[Fraction] = None
    jump_multipliers: Tuple[int, ...] = (2, 4)

    def __post_init__(self):
        if self.variant not in ("dc", "rr"):
            raise MapError(f"unknown variant {self.variant!r}")
        p = self.swamp_restart_probability
        if p is not None and not 0 < p < 1:
            raise MapError("swamp restart probability must lie strictly between 0 and 1")
        if not self.jump_multipliers or any(m < 2 for m in self.jump_multipliers):
            raise MapError("jump multipliers must be >= 2")


def parse_map(text: str) -> GridMap:
    """Parse the ``map v1`` format."""
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    content = [(i + 1, ln.rstrip()) for i, ln in enumerate(lines)]
    content = [(n, ln) for n, ln in content if ln.strip()]
    if not content or content[0][1].strip() != "map v1":
        raise MapError("line 1: expected header 'map v1'")
    if len(content) < 2 or content[1][1].strip() != "grid":
        raise MapError("expected 'grid' after the header")
    rows: List[str] = []
    k = 2
    while k < len(content) and content[k][1].strip() != "end":
        lineno, row = content[k]
        row = row.strip()
        bad = set(row) - CELL_CHARS
        if bad:
            raise MapError(f"line {lineno}: unknown cell characters {sorted(bad)}")
        if rows and len(row) != len(rows[0]):
            raise MapError(f"line {lineno}: ragged row (width {len(row)}, expected {len(rows[0])})")
        rows.append(row)
        k += 1
    if k == len(content):
        raise MapError("missing 'end' after the grid")
    if not rows:
        raise MapError("empty grid")
    goals: Dict[Cell, int] = {}
    variant = "dc"
    for lineno, line in content[k + 1 :]:
        tok = line.split()
        if tok[0] == "goal" and len(tok) == 4:
            try:
                x, y, r = int(tok[1]), int(tok[2]), int(tok[3])
            except ValueError:
                raise MapError(f"line {lineno}: goal needs integer x y reward") from None
            if not (0 <= x < len(rows[0]) and 0 <= y < len(rows)):
                raise MapError(f"line {lineno}: goal ({x}, {y}) outside the grid")
            if rows[y][x] == WALL:
                raise MapError(f"line {lineno}: goal ({x}, {y}) is a wall cell")
            if rows[y][x] != GOAL:
                raise MapError(f"line {lineno}: goal ({x}, {y}) is not a 'G' cell")
            if (x, y) in goals:
                raise MapError(f"line {lineno}: duplicate goal ({x}, {y})")
            if not 0 < r <= VALUE_CAP:
                raise MapError(f"line {lineno}: goal reward must be positive")
            goals[(x, y)] = r
        elif tok[0] == "variant" and len(tok) == 2:
            if tok[1] not in ("dc", "rr"):
                raise MapError(f"line {lineno}: variant must be dc or rr")
            variant = tok[1]
        else:
            raise MapError(f"line {lineno}: unknown annotation {line.strip()!r}")

    gm = GridMap(tuple(rows), goals, variant)
    h, w = gm.height, gm.width
    for y in range(h):
        for x in range(w):
            if (x in (0, w - 1) or y in (0, h - 1)) and rows[y][x] != WALL:
                raise MapError(f"boundary cell ({x}, {y}) must be a wall")
    for c in gm.cells_of(GOAL):
        if c not in goals:
            raise MapError(f"goal cell {c} has no 'goal' annotation")
    if not gm.cells_of(START):
        raise MapError("map has no start cell")
    return gm


def _name(c: Cell) -> str:
    return f"{c[0]}_{c[1]}"


def compile_map(gm: GridMap, sem: Optional[GridSemantics] = None) -> TaskModel:
    """Build the task for ``gm``; semantics default to the map's own variant."""
    sem = sem or GridSemantics(gm.variant)
    cells = gm.open_cells()
    index = {c: i for i, c in enumerate(cells)}
    starts = tuple(index[c] for c in gm.cells_of(START))
    if sem.variant == "dc":
        if len(starts) != 1:
            raise MapError("dc maps need exactly one start cell")
        if gm.cells_of(SWAMP) or gm.cells_of(JUMP):
            raise MapError("dc maps cannot contain swamp or jump cells")

    def free(c: Cell) -> bool:
        return gm.kind(*c) != WALL

    succ: List[Tuple[int, ...]] = []
    rewards: List[int] = []
    weights: List[Tuple[int, ...]] = []
    for c in cells:
        kind = gm.kind(*c)
        here = index[c]
        for act in ACTIONS:
            reward = 0
            if kind == SWAMP:
                offsets = [(c[0] + dx, c[1] + dy) for dx, dy in SWAMP_OFFSETS]
                landing = [index[o] for o in offsets if free(o)]
                targets = tuple(sorted(set(starts) | set(landing)))
                weights.append(_swamp_weights(targets, starts, landing, sem))
            elif act == "finish":
                if kind == GOAL:
                    reward = gm.goals[c]
                    targets = starts
                else:
                    targets = (here,)
                weights.append(tuple(1 for _ in targets))
            else:
                dx, dy = DIRECTIONS[act]
                if kind == JUMP:
                    dests = [(c[0] + m * dx, c[1] + m * dy) for m in sem.jump_multipliers]
                    hits = sorted({index[d] for d in dests if free(d)})
                    targets = tuple(hits) or (here,)
                else:
                    d = (c[0] + dx, c[1] + dy)
                    targets = (index[d],) if free(d) else (here,)
                weights.append(tuple(1 for _ in targets))
            succ.append(targets)
            rewards.append(reward)

    biased = sem.swamp_restart_probability is not None
    T = TaskModel(
        len(cells),
        len(ACTIONS),
        tuple(sorted(starts)),
        tuple(succ),
        tuple(rewards),
        tuple(_name(c) for c in cells),
        ACTIONS,
        tuple(weights) if biased else None,
    )
    if sem.variant == "dc":
        if not (is_deterministic(T) and is_connected(T)):
            raise MapError("dc map does not compile to a deterministic connected task")
    else:
        _require_rr(T)
    return T


def _swamp_weights(targets, starts, landing, sem: GridSemantics) -> Tuple[int, ...]:
    """Integer weights realizing P(restart) = p, split evenly within each branch."""
    p = sem.swamp_restart_probability
    if p is None:
        return tuple(1 for _ in targets)
    # offsets that hit a wall are dropped from the offset branch
    scale = p.denominator * lcm(len(starts), len(landing) or 1)
    w = {t: 0 for t in targets}
    for s in starts:
        w[s] += p.numerator * scale // (p.denominator * len(starts))
    q = 1 - p
    for t in landing:
        w[t] += q.numerator * scale // (q.denominator * len(landing))
    return tuple(w[t] for t in targets)


def _require_rr(T: TaskModel) -> None:
    report = reducibility(T)
    problems = []
    outside = [T.state_names[s] for s in T.start_states if s not in report.reducible]
    if outside:
        problems.append("start cells not reducible: " + ", ".join(outside))
    stuck = escape_failures(T, report)
    if stuck:
        problems.append(
            "no escape to start: "
            + ", ".join(f"{T.state_names[a]}->{T.state_names[b]}" for a, b in stuck[:10])
        )
    if not is_restartable(T):
        problems.append("rewarding pairs do not restart at the start set")
    if problems:
        raise MapError("rr map is not reducible and restartable: " + "; ".join(problems))


# --- rendering and export --------------------------------------------------------


def render_values(V: ValueFunction, gm: GridMap) -> List[List[Optional[int]]]:
    """Per-cell state value; walls are None."""
    if V.n_states != len(gm.open_cells()) or V.n_actions != len(ACTIONS):
        raise MapError("value function does not belong to this map's compiled task")
    return render_state_values(V.state_values(), gm)


def render_state_values(sv: Sequence[int], gm: GridMap) -> List[List[Optional[int]]]:
    cells = gm.open_cells()
    if len(sv) != len(cells):
        raise MapError("value table does not match the map's compiled task")
    lookup = dict(zip(cells, sv))
    return [[lookup.get((x, y)) for x in range(gm.width)] for y in range(gm.height)]


def matrix_to_csv(matrix: Sequence[Sequence[Optional[int]]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in matrix:
        writer.writerow("" if v is None else v for v in row)
    return buf.getvalue()


def csv_to_matrix(text: str) -> List[List[Optional[int]]]:
    return [
        [None if cell == "" else int(cell) for cell in row]
        for row in csv.reader(io.StringIO(text))
    ]


def matrix_to_pgm(matrix: Sequence[Sequence[Optional[int]]]) -> bytes:
    """8-bit binary PGM; the largest value maps to 255, walls and zeros to 0."""
    height = len(matrix)
    width = len(matrix[0]) if height else 0
    top = max((v for row in matrix for v in row if v is not None), default=0)
    pixels = bytearray()
    for row in matrix:
        for v in row:
            pixels.append(0 if not v or not top else (v * 255 + top // 2) // top)
    return f"P5\n{width} {height}\n255\n".encode("ascii") + bytes(pixels)
