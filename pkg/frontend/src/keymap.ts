/** Pressed-key set to action id; unknown keys are ignored. */

export const ACTION_NOOP = 0;
export const ACTION_LEFT = 1;
export const ACTION_RIGHT = 2;
export const ACTION_JUMP = 3;
export const ACTION_JUMP_LEFT = 4;
export const ACTION_JUMP_RIGHT = 5;
export const ACTION_DOWN = 6;

/** KeyboardEvent.code values the client reacts to. */
export const TRACKED_CODES = new Set([
  "ArrowLeft",
  "ArrowRight",
  "ArrowDown",
  "Space",
]);

/**
 * Jump combos win, then horizontal, then down. Left beats right when
 * both are held so the result is deterministic.
 */
export function keyToAction(pressed: ReadonlySet<string>): number {
  const left = pressed.has("ArrowLeft");
  const right = pressed.has("ArrowRight");
  const jump = pressed.has("Space");
  if (jump && left) return ACTION_JUMP_LEFT;
  if (jump && right) return ACTION_JUMP_RIGHT;
  if (jump) return ACTION_JUMP;
  if (left) return ACTION_LEFT;
  if (right) return ACTION_RIGHT;
  if (pressed.has("ArrowDown")) return ACTION_DOWN;
  return ACTION_NOOP;
}
