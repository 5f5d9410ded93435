"""Data-collection policies: a scripted expert and a repeat-sampling random
policy, mixed per step during collection."""

from __future__ import annotations

from ..rng import Rng
from ..tilequest.engine import (
    Action,
    GameState,
    PLAYER_H,
    PLAYER_W,
    TILE_UNITS,
    is_grounded,
)
from ..tilequest.tiles import Tile, TileMap

MAX_REPEAT = 4


class RandomPolicy:
    """Uniform random actions held for a random 1..MAX_REPEAT ticks.

    An optional preferred action receives `preferred_weight` times the mass of
    each other action when a new action is drawn (off at weight 1).
    """

    def __init__(self, preferred: Action = Action.Right, preferred_weight: float = 1.0,
                 repeat_max: int = MAX_REPEAT):
        if repeat_max < 1:
            raise ValueError("repeat_max must be >= 1")
        self.preferred = Action(preferred)
        self.weight = float(preferred_weight)
        self.repeat_max = int(repeat_max)
        self._current = Action.Noop
        self._left = 0

    def sample(self, rng: Rng) -> Action:
        if self._left <= 0:
            n = len(Action)
            if self.weight != 1.0:
                total = (n - 1) + self.weight
                u = rng.uniform() * total
                if u < self.weight:
                    self._current = self.preferred
                else:
                    idx = int(u - self.weight)
                    others = [a for a in Action if a != self.preferred]
                    self._current = others[min(idx, n - 2)]
            else:
                self._current = Action(rng.below(n))
            self._left = 1 + rng.below(self.repeat_max)
        self._left -= 1
        return self._current


def _surface_row(m: TileMap, x: int) -> int:
    for y in range(m.height):
        if m.is_solid(x, y):
            return y
    return m.height


def expert_action(state: GameState, m: TileMap, rng: Rng) -> Action:
    """Heuristic goal-seeker: walks toward the goal, hold-jumps over hazards
    and up ledges, hops for collectibles overhead. Stateless apart from the
    physics state, so it can be queried at any point of an episode. A small
    exploration chance keeps it from deadlocking in corners."""
    if rng.chance(0.05):
        return Action(rng.below(7))

    goals = m.find_all(Tile.Goal)
    gx = goals[0][0] if goals else m.width - 2
    x, y = state.pos
    cx = (x + PLAYER_W // 2) // TILE_UNITS
    cy = (y + PLAYER_H // 2) // TILE_UNITS
    d = 1 if gx * TILE_UNITS + TILE_UNITS // 2 > x + PLAYER_W // 2 else -1
    run = Action.Right if d > 0 else Action.Left
    jump_run = Action.JumpRight if d > 0 else Action.JumpLeft

    airborne = not is_grounded(state, m)
    if airborne:
        # keep rising while ascending to clear whatever prompted the jump
        return jump_run if state.vel[1] < 0 else run

    next_col = cx + d
    if not (0 <= next_col < m.width):
        return run
    here_surface = _surface_row(m, cx)
    ahead_surface = _surface_row(m, next_col)

    # collectible overhead: hop in place
    for dy in (1, 2, 3):
        if m.at(cx, cy - dy) in (Tile.Coin, Tile.PowerUp) and (cx, cy - dy) not in state.collected:
            return Action.Jump

    # hazard in the next two columns at walking height: full jump over
    for dist in (1, 2):
        col = cx + d * dist
        if 0 <= col < m.width and m.at(col, _surface_row(m, col) - 1) == Tile.Hazard:
            return jump_run

    # ledge ahead: jump to climb
    if ahead_surface < here_surface:
        return jump_run

    return run
