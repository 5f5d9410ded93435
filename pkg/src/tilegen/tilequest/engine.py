"""Pure, integer-exact game step. All positions and velocities are in
sixteenths of a tile so every trajectory is bit-reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum, IntFlag

from .tiles import Tile, TileMap

TILE_UNITS = 16
PLAYER_W = 12
PLAYER_H = 12

WALK_SPEED = 2
JUMP_IMPULSE = 9
GRAVITY = 2
GRAVITY_HOLD = 1      # while a jump action is held: variable jump height
GRAVITY_FASTFALL = 4  # Down in the air
TERMINAL_FALL = 6


class Action(IntEnum):
    Noop = 0
    Left = 1
    Right = 2
    Jump = 3
    JumpLeft = 4
    JumpRight = 5
    Down = 6


JUMP_ACTIONS = frozenset({Action.Jump, Action.JumpLeft, Action.JumpRight})
LEFT_ACTIONS = frozenset({Action.Left, Action.JumpLeft})
RIGHT_ACTIONS = frozenset({Action.Right, Action.JumpRight})


class Status(IntEnum):
    Small = 0
    Powered = 1


class Event(IntFlag):
    NONE = 0
    POWERUP_CONSUMED = 1
    DIED = 2
    REACHED_GOAL = 4
    COIN_COLLECTED = 8


EVENT_ORDER = (Event.POWERUP_CONSUMED, Event.DIED, Event.REACHED_GOAL,
               Event.COIN_COLLECTED)


@dataclass(frozen=True)
class GameState:
    pos: tuple[int, int]          # top-left of the player box, in units
    vel: tuple[int, int]
    status: Status
    alive: bool
    crouching: bool
    tick: int
    collected: frozenset[tuple[int, int]]
    rng_state: int


@dataclass(frozen=True)
class ExtraInfo:
    tile_x: int
    tile_y: int
    status: Status
    events: Event


def _spawn_pos(m: TileMap, cell: tuple[int, int]) -> tuple[int, int]:
    cx, cy = cell
    x = cx * TILE_UNITS + (TILE_UNITS - PLAYER_W) // 2
    y = (cy + 1) * TILE_UNITS - PLAYER_H
    return (x, y)


def reset(m: TileMap, seed: int, spawn: tuple[int, int] | None = None) -> GameState:
    """Fresh state standing at `spawn` (a standing cell; defaults to the map's
    spawn point)."""
    cell = spawn if spawn is not None else m.spawn_default
    return GameState(
        pos=_spawn_pos(m, cell),
        vel=(0, 0),
        status=Status.Small,
        alive=True,
        crouching=False,
        tick=0,
        collected=frozenset(),
        rng_state=seed & ((1 << 64) - 1),
    )


def center_tile(pos: tuple[int, int]) -> tuple[int, int]:
    return ((pos[0] + PLAYER_W // 2) // TILE_UNITS,
            (pos[1] + PLAYER_H // 2) // TILE_UNITS)


def snapshot(state: GameState) -> ExtraInfo:
    """Side-channel info for the current state, with no events."""
    tx, ty = center_tile(state.pos)
    return ExtraInfo(tile_x=tx, tile_y=ty, status=state.status, events=Event.NONE)


def _box_tiles(m: TileMap, x: int, y: int):
    """Tile coordinates overlapped by the player box at top-left (x, y)."""
    x0, x1 = x // TILE_UNITS, (x + PLAYER_W - 1) // TILE_UNITS
    y0, y1 = y // TILE_UNITS, (y + PLAYER_H - 1) // TILE_UNITS
    for ty in range(y0, y1 + 1):
        for tx in range(x0, x1 + 1):
            yield tx, ty


def _blocked(m: TileMap, x: int, y: int) -> bool:
    if x < 0 or x + PLAYER_W > m.width * TILE_UNITS:
        return True
    if y < 0 or y + PLAYER_H > m.height * TILE_UNITS:
        return True
    return any(m.is_solid(tx, ty) for tx, ty in _box_tiles(m, x, y))


def _grounded(m: TileMap, x: int, y: int) -> bool:
    feet = y + PLAYER_H
    if feet % TILE_UNITS != 0:
        return False
    if feet >= m.height * TILE_UNITS:
        return True
    row = feet // TILE_UNITS
    return any(m.is_solid(tx, row)
               for tx in range(x // TILE_UNITS, (x + PLAYER_W - 1) // TILE_UNITS + 1))


def is_grounded(state: GameState, m: TileMap) -> bool:
    """True when the player stands on solid ground (feet flush on a tile
    boundary with support below)."""
    return _grounded(m, state.pos[0], state.pos[1])


def step(state: GameState, m: TileMap, action: Action) -> tuple[GameState, ExtraInfo]:
    """Advance one tick. Value semantics: the input state is never mutated.

    Tick order: respawn if the previous step ended the run; gravity; walk and
    crouch resolution; jump impulse; horizontal then vertical collision moves;
    tile interactions. Hazard contact demotes Powered to Small and kills Small.
    Goal or death ends the run; the following step respawns at the default
    spawn with collected tiles preserved.
    """
    action = Action(action)
    if not state.alive:
        ns = GameState(
            pos=_spawn_pos(m, m.spawn_default),
            vel=(0, 0),
            status=Status.Small,
            alive=True,
            crouching=False,
            tick=state.tick + 1,
            collected=state.collected,
            rng_state=state.rng_state,
        )
        return ns, snapshot(ns)

    x, y = state.pos
    vy = state.vel[1]
    grounded = _grounded(m, x, y)

    if grounded:
        vy = 0
    else:
        if action in JUMP_ACTIONS:
            g = GRAVITY_HOLD
        elif action == Action.Down:
            g = GRAVITY_FASTFALL
        else:
            g = GRAVITY
        vy = min(vy + g, TERMINAL_FALL)

    crouching = grounded and action == Action.Down
    if crouching:
        vx = 0
    elif action in LEFT_ACTIONS:
        vx = -WALK_SPEED
    elif action in RIGHT_ACTIONS:
        vx = WALK_SPEED
    else:
        vx = 0

    if grounded and action in JUMP_ACTIONS:
        vy = -JUMP_IMPULSE

    nx = x + vx
    if vx and _blocked(m, nx, y):
        if vx > 0:
            nx = ((nx + PLAYER_W - 1) // TILE_UNITS) * TILE_UNITS - PLAYER_W
        else:
            nx = (nx // TILE_UNITS + 1) * TILE_UNITS
        nx = max(0, min(nx, m.width * TILE_UNITS - PLAYER_W))
        vx = nx - x

    ny = y + vy
    if vy and _blocked(m, nx, ny):
        if vy > 0:
            ny = ((ny + PLAYER_H - 1) // TILE_UNITS) * TILE_UNITS - PLAYER_H
        else:
            ny = (ny // TILE_UNITS + 1) * TILE_UNITS
        ny = max(0, min(ny, m.height * TILE_UNITS - PLAYER_H))
        vy = 0

    events = Event.NONE
    status = state.status
    alive = True
    collected = state.collected
    touched = list(_box_tiles(m, nx, ny))
    goal_hit = any(m.at(tx, ty) == Tile.Goal for tx, ty in touched)
    new_items = [(tx, ty) for tx, ty in touched
                 if m.at(tx, ty) in (Tile.Coin, Tile.PowerUp)
                 and (tx, ty) not in collected]
    if new_items:
        collected = collected | frozenset(new_items)
        if any(m.at(tx, ty) == Tile.Coin for tx, ty in new_items):
            events |= Event.COIN_COLLECTED
        if any(m.at(tx, ty) == Tile.PowerUp for tx, ty in new_items):
            events |= Event.POWERUP_CONSUMED
            status = Status.Powered
    if goal_hit:
        events |= Event.REACHED_GOAL
        alive = False
    elif any(m.at(tx, ty) == Tile.Hazard for tx, ty in touched):
        if status == Status.Powered:
            status = Status.Small
        else:
            events |= Event.DIED
            alive = False

    ns = GameState(
        pos=(nx, ny),
        vel=(vx, vy),
        status=status,
        alive=alive,
        crouching=crouching,
        tick=state.tick + 1,
        collected=collected,
        rng_state=state.rng_state,
    )
    tx, ty = center_tile(ns.pos)
    return ns, ExtraInfo(tile_x=tx, tile_y=ty, status=ns.status, events=events)
