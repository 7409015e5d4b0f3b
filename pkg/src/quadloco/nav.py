"""Navigation layer: grid path-finding, the path-to-command translator,
and reactive ray-sensor steering.

The locomotion policy is decoupled from navigation; these modules only
emit (speed, heading offset) command sequences for it to follow.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from .model import Command

FREE, WALL, START, GOAL, ITEM = ".", "#", "S", "G", "I"
# Turn rate assumed by the translator; the arc radius at cruise speed v is
# v / TURN_RATE, and corner cuts stay within half a cell for cell sizes
# >= ~0.7 * v even on single-cell zigzags.
TURN_RATE = math.pi


@dataclass
class GridMap:
    cells: list[str]  # rows of equal length, characters in {#,.,S,G,I}
    cell_size: float = 1.0

    def __post_init__(self):
        if not self.cells:
            raise ValueError("empty map")
        width = len(self.cells[0])
        if any(len(row) != width for row in self.cells):
            raise ValueError("ragged map rows")
        bad = {ch for row in self.cells for ch in row} - {FREE, WALL, START,
                                                          GOAL, ITEM}
        if bad:
            raise ValueError(f"unknown map characters: {sorted(bad)}")
        starts = self.find(START)
        if len(starts) != 1:
            raise ValueError(f"need exactly one start, found {len(starts)}")
        if not (self.find(GOAL) or self.find(ITEM)):
            raise ValueError("need at least one goal or item")

    @property
    def height(self) -> int:
        return len(self.cells)

    @property
    def width(self) -> int:
        return len(self.cells[0])

    def find(self, ch: str) -> list[tuple[int, int]]:
        return [(x, y) for y, row in enumerate(self.cells)
                for x, c in enumerate(row) if c == ch]

    def passable(self, x: int, y: int) -> bool:
        return (0 <= x < self.width and 0 <= y < self.height
                and self.cells[y][x] != WALL)

    @classmethod
    def parse(cls, text: str, cell_size: float = 1.0) -> "GridMap":
        rows = [line for line in text.splitlines() if line.strip()]
        return cls(rows, cell_size)

    @classmethod
    def load(cls, path: str, cell_size: float = 1.0) -> "GridMap":
        with open(path) as f:
            return cls.parse(f.read(), cell_size)


def astar(grid: GridMap, start: tuple[int, int], goal: tuple[int, int]):
    """4-connected shortest path with Manhattan heuristic.

    Ties break toward smaller (y, x) so results are deterministic. Returns
    the cell list including both endpoints, or None when unreachable.
    """
    for p in (start, goal):
        if not (0 <= p[0] < grid.width and 0 <= p[1] < grid.height):
            raise ValueError(f"cell {p} out of bounds")
    if start == goal:
        return [start]

    def h(c):
        return abs(c[0] - goal[0]) + abs(c[1] - goal[1])

    open_heap = [(h(start), start[1], start[0], 0, start)]
    best_g = {start: 0}
    came: dict = {}
    while open_heap:
        f, _, _, g, cell = heapq.heappop(open_heap)
        if cell == goal:
            path = [cell]
            while cell in came:
                cell = came[cell]
                path.append(cell)
            return path[::-1]
        if g > best_g.get(cell, math.inf):
            continue
        x, y = cell
        for nx, ny in ((x, y - 1), (x - 1, y), (x + 1, y), (x, y + 1)):
            if not grid.passable(nx, ny):
                continue
            ng = g + 1
            if ng < best_g.get((nx, ny), math.inf):
                best_g[(nx, ny)] = ng
                came[(nx, ny)] = cell
                heapq.heappush(open_heap, (ng + h((nx, ny)), ny, nx, ng,
                                           (nx, ny)))
    return None


def bfs_path_cost(grid: GridMap, start, goal):
    """Breadth-first oracle: number of edges on a shortest path, or None."""
    from collections import deque

    if start == goal:
        return 0
    seen = {start}
    queue = deque([(start, 0)])
    while queue:
        (x, y), d = queue.popleft()
        for nxt in ((x, y - 1), (x - 1, y), (x + 1, y), (x, y + 1)):
            if nxt == goal:
                return d + 1
            if grid.passable(*nxt) and nxt not in seen:
                seen.add(nxt)
                queue.append((nxt, d + 1))
    return None


@dataclass
class TimedCommand:
    duration: float
    command: Command

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("durations must be positive")


# Grid directions to headings. Headings follow the (cos, -sin) convention
# and map rows grow southward, so grid north (0,-1) is heading -pi/2.
_DIR_HEADING = {(1, 0): 0.0, (0, -1): -math.pi / 2, (-1, 0): math.pi,
                (0, 1): math.pi / 2}


def path_to_commands(path, cruise_speed: float, cell_size: float = 1.0,
                     initial_heading: float | None = None) -> list[TimedCommand]:
    """Translate a grid path into timed (speed, heading offset) commands.

    Collinear runs become straight segments at cruise speed; each turn
    emits a +-pi/2 heading command whose duration covers the arc at the
    standard turn rate. Straight runs are shortened by the turn radius on
    each turning end so the arc cuts the corner and the replayed track
    still passes within half a cell of every path cell center.
    """
    if len(path) < 2:
        raise ValueError("path must contain at least two cells")
    dirs = []
    for (x0, y0), (x1, y1) in zip(path, path[1:]):
        d = (x1 - x0, y1 - y0)
        if d not in _DIR_HEADING:
            raise ValueError(f"path cells not 4-connected: {d}")
        dirs.append(d)
    # collapse into runs of equal direction
    runs = []
    for d in dirs:
        if runs and runs[-1][0] == d:
            runs[-1][1] += 1
        else:
            runs.append([d, 1])
    radius = cruise_speed / TURN_RATE
    seq: list[TimedCommand] = []
    heading = _DIR_HEADING[runs[0][0]]
    if initial_heading is not None and abs(
            wrapped := _wrap(heading - initial_heading)) > 1e-9:
        seq.append(TimedCommand(abs(wrapped) / TURN_RATE,
                                Command(cruise_speed, wrapped)))
    for i, (d, count) in enumerate(runs):
        length = count * cell_size
        if i > 0:
            length -= radius
        if i + 1 < len(runs):
            length -= radius
        if length > 1e-9:
            seq.append(TimedCommand(length / cruise_speed,
                                    Command(cruise_speed, 0.0)))
        if i + 1 < len(runs):
            turn = _wrap(_DIR_HEADING[runs[i + 1][0]] - _DIR_HEADING[d])
            seq.append(TimedCommand(abs(turn) / TURN_RATE,
                                    Command(cruise_speed, turn)))
    return seq


def _wrap(a: float) -> float:
    while a <= -math.pi:
        a += 2 * math.pi
    while a > math.pi:
        a -= 2 * math.pi
    return a


def replay_commands(seq: list[TimedCommand], start_xy, start_heading: float,
                    dt: float = 1.0 / 30.0):
    """Unicycle integration of a command sequence (kinematic oracle).

    The final partial step of each segment uses the exact remaining time,
    so duration rounding never accumulates across segments.
    """
    x, y = float(start_xy[0]), float(start_xy[1])
    psi = float(start_heading)
    points = [(x, y)]
    for tc in seq:
        rate = tc.command.heading_delta / tc.duration if \
            tc.command.heading_delta else 0.0
        remaining = tc.duration
        while remaining > 1e-12:
            h = min(dt, remaining)
            remaining -= h
            psi += rate * h
            x += tc.command.speed * h * math.cos(psi)
            y += tc.command.speed * h * -math.sin(psi)
            points.append((x, y))
    return points, psi


def cell_center(cell, cell_size: float = 1.0):
    # map row index grows southward; world y grows northward
    return (cell[0] * cell_size, -cell[1] * cell_size)


@dataclass
class RayNavConfig:
    n_rays: int = 9
    fov: float = math.pi        # rays spread over 180 degrees
    max_range: float = 10.0
    avoid_radius: float = 1.5
    slow_radius: float = 2.0
    min_speed: float = 0.2
    cruise_speed: float = 1.0
    turn_gain: float = 1.0
    avoid_turn: float = 0.5 * math.pi


def ray_navigate(ray_distances, goal_bearing: float,
                 cfg: RayNavConfig | None = None) -> Command:
    """Reactive steering from a ray fan and a goal bearing estimate.

    Rays are ordered left to right with the middle ray pointing forward;
    positive heading offsets turn left. Steers toward the goal; when the
    forward ray reports an obstacle inside the avoid radius the heading
    biases away from the more blocked side (ties prefer left). Speed
    scales down linearly with forward clearance below the slow radius,
    floored at the minimum speed.
    """
    cfg = cfg or RayNavConfig()
    rays = list(ray_distances)
    if len(rays) < 3:
        raise ValueError("need at least 3 rays")
    rays = [cfg.max_range if r is None else min(float(r), cfg.max_range)
            for r in rays]
    mid = len(rays) // 2
    forward = rays[mid]
    heading_delta = cfg.turn_gain * _wrap(goal_bearing)
    if forward < cfg.avoid_radius:
        left_clear = sum(rays[:mid])
        right_clear = sum(rays[mid + 1:])
        if left_clear >= right_clear:
            heading_delta = cfg.avoid_turn
        else:
            heading_delta = -cfg.avoid_turn
    speed = cfg.cruise_speed
    if forward < cfg.slow_radius:
        speed = max(cfg.min_speed,
                    cfg.cruise_speed * forward / cfg.slow_radius)
    return Command(speed, _wrap(heading_delta))
