"""Tile grid, procedural level generation, and the reachability oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from ..rng import Rng

HEIGHT_TILES = 8
MIN_WIDTH = 16
MAX_ELEVATION = 2


class Tile(IntEnum):
    Empty = 0
    Solid = 1
    Pipe = 2
    Coin = 3
    PowerUp = 4
    Hazard = 5
    Goal = 6


SOLID_TILES = frozenset({Tile.Solid, Tile.Pipe})


@dataclass(frozen=True)
class TileMap:
    """Immutable level grid. `tiles` is row-major, one byte per tile."""

    width: int
    height: int
    tiles: bytes
    spawn_default: tuple[int, int]

    def at(self, x: int, y: int) -> Tile:
        """Tile at column x, row y. Out-of-bounds reads as Solid so the map
        boundary behaves like a wall."""
        if 0 <= x < self.width and 0 <= y < self.height:
            return Tile(self.tiles[y * self.width + x])
        return Tile.Solid

    def is_solid(self, x: int, y: int) -> bool:
        return self.at(x, y) in SOLID_TILES

    def find_all(self, tile: Tile) -> list[tuple[int, int]]:
        out = []
        for y in range(self.height):
            row = y * self.width
            for x in range(self.width):
                if self.tiles[row + x] == tile:
                    out.append((x, y))
        return out


def _pick_special_columns(rng: Rng, width: int, count: int, lo: int, hi: int,
                          taken: list[int], spacing: int) -> list[int]:
    """Pick `count` columns in [lo, hi) at least `spacing` apart from anything
    in `taken`. Falls back to a deterministic scan when rejection sampling
    runs dry, so small maps still satisfy the level contract."""
    picked: list[int] = []
    for _ in range(count):
        placed = False
        for _ in range(64):
            c = lo + rng.below(max(1, hi - lo))
            if all(abs(c - t) >= spacing for t in taken + picked):
                picked.append(c)
                placed = True
                break
        if not placed:
            for c in range(lo, hi):
                if all(abs(c - t) >= spacing for t in taken + picked):
                    picked.append(c)
                    placed = True
                    break
        if not placed:
            break
    return picked


def gen_level(seed: int, width: int) -> TileMap:
    """Generate a level: rolling terrain, at least one pipe obstacle, hazards,
    floating coins and power-ups, and exactly one goal flag near the right edge.

    Pipes are 3 tiles tall, which is above the maximum jump, so they partition
    the level for anything that cannot already stand past them. Terrain is
    flattened within 2 columns of pipes and hazards so neither can be cleared
    or trivialized by an elevation quirk.
    """
    if width < MIN_WIDTH:
        raise ValueError(f"level width must be >= {MIN_WIDTH}, got {width}")
    rng = Rng(seed)
    h = HEIGHT_TILES

    goal_col = width - 2
    n_pipes = max(1, width // 24)
    n_hazards = max(1, width // 16)
    n_power = max(1, width // 32)

    pipe_cols = _pick_special_columns(rng, width, n_pipes, 6, width - 6, [goal_col], 6)
    hazard_cols = _pick_special_columns(
        rng, width, n_hazards, 4, width - 4, pipe_cols + [goal_col, 0, 1, 2], 5)
    special = sorted(pipe_cols + hazard_cols)

    def near_special(x: int) -> bool:
        return any(abs(x - s) <= 2 for s in special)

    # Elevation random walk, frozen flat around pipes/hazards and the spawn.
    elev = [0] * width
    for x in range(1, width):
        e = elev[x - 1]
        if x > 3 and not near_special(x) and not near_special(x - 1) and rng.chance(0.25):
            e += rng.choice((-1, 1))
        elev[x] = min(max(e, 0), MAX_ELEVATION)

    surface = [h - 1 - elev[x] for x in range(width)]  # topmost solid row per column

    grid = bytearray([Tile.Empty] * (width * h))

    def put(x: int, y: int, t: Tile) -> None:
        grid[y * width + x] = t

    for x in range(width):
        for y in range(surface[x], h):
            put(x, y, Tile.Solid)

    for c in pipe_cols:
        for y in range(surface[c] - 3, surface[c]):
            put(c, y, Tile.Pipe)

    for c in hazard_cols:
        put(c, surface[c] - 1, Tile.Hazard)

    put(goal_col, surface[goal_col] - 1, Tile.Goal)

    used = set(special) | {goal_col}
    power_candidates = [x for x in range(3, width - 3)
                        if not near_special(x) and abs(x - goal_col) > 1]
    for _ in range(n_power):
        free = [x for x in power_candidates if x not in used]
        if not free:
            break
        c = free[rng.below(len(free))]
        put(c, surface[c] - 3, Tile.PowerUp)
        used.add(c)

    for x in range(3, width - 3):
        if x in used or near_special(x):
            continue
        if rng.chance(0.12):
            put(x, surface[x] - 2, Tile.Coin)

    spawn = (1, surface[1] - 1)
    m = TileMap(width=width, height=h, tiles=bytes(grid), spawn_default=spawn)
    _validate(m)
    return m


def _validate(m: TileMap) -> None:
    for t, lo in ((Tile.Pipe, 1), (Tile.Hazard, 1), (Tile.PowerUp, 1)):
        if len(m.find_all(t)) < lo:
            raise ValueError(f"level contract violated: needs >= {lo} {t.name}")
    if len(m.find_all(Tile.Goal)) != 1:
        raise ValueError("level contract violated: exactly one Goal required")
    sx, sy = m.spawn_default
    if m.at(sx, sy) != Tile.Empty or not m.is_solid(sx, sy + 1):
        raise ValueError("spawn must be an empty tile with solid support")


def _stand_row(m: TileMap, x: int) -> int:
    """Row index of the cell the player's center occupies when standing on the
    topmost solid surface of column x."""
    for y in range(m.height):
        if m.is_solid(x, y):
            return y - 1
    return m.height - 1


def spawnable(m: TileMap) -> list[tuple[int, int]]:
    """Standing cells a run may start from: the Empty cell atop each column's
    highest solid surface. Hazard and goal cells are excluded."""
    out = []
    for x in range(m.width):
        y = _stand_row(m, x)
        if y >= 0 and m.at(x, y) == Tile.Empty:
            out.append((x, y))
    return out


def reachable_tiles(m: TileMap) -> set[tuple[int, int]]:
    """Conservative BFS over positions the player's center tile can occupy,
    restricted to Empty tiles. Seeded from every spawnable cell, since runs
    start at uniformly random spawnable positions.

    Nodes are per-column standing cells. Edges: walk/jump to an adjacent
    column when the climb is at most 2 tiles (the full-hold jump ceiling), any
    descent, and a hop over a single hazard column between flat neighbors.
    Hazard and goal cells absorb (the run ends there), so they contribute no
    outgoing edges. Each visited standing cell contributes the two rows above
    it (jump clearance); descents contribute the rows fallen through. Rows
    three above a stand cell are excluded even though full-hold apexes brush
    them, keeping the oracle conservative.
    """
    stand = [_stand_row(m, x) for x in range(m.width)]

    def absorbing(x: int) -> bool:
        return m.at(x, stand[x]) in (Tile.Hazard, Tile.Goal)

    seen_nodes = {x for x, _ in spawnable(m)}
    frontier = list(seen_nodes)
    cells: set[tuple[int, int]] = set()

    def add_cell(x: int, y: int) -> None:
        if 0 <= y < m.height and m.at(x, y) == Tile.Empty:
            cells.add((x, y))

    def visit_column(x: int) -> None:
        y = stand[x]
        add_cell(x, y)
        add_cell(x, y - 1)
        add_cell(x, y - 2)

    for x in seen_nodes:
        visit_column(x)
    while frontier:
        x = frontier.pop()
        if absorbing(x):
            continue
        y = stand[x]
        for dx in (-1, 1):
            nx = x + dx
            if not (0 <= nx < m.width):
                continue
            climb = y - stand[nx]
            if climb > 2:
                continue
            if stand[nx] > y:
                for r in range(y, stand[nx]):
                    add_cell(nx, r)
            if nx not in seen_nodes:
                seen_nodes.add(nx)
                visit_column(nx)
                frontier.append(nx)
        for dx in (-2, 2):
            nx = x + dx
            over = x + dx // 2
            if not (0 <= nx < m.width):
                continue
            if m.at(over, stand[over]) != Tile.Hazard:
                continue
            if abs(stand[nx] - y) > 1 or abs(stand[over] - y) > 1:
                continue
            add_cell(over, stand[over] - 1)
            add_cell(over, stand[over] - 2)
            if nx not in seen_nodes:
                seen_nodes.add(nx)
                visit_column(nx)
                frontier.append(nx)
    return cells
