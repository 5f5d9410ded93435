/** Injected time source so the session loop is testable. */

export interface Clock {
  /** Monotone-enough milliseconds. */
  now(): number;
  /** Repeats fn every ms; returns a cancel function. */
  every(ms: number, fn: () => void): () => void;
}

export const systemClock: Clock = {
  now: () => Date.now(),
  every(ms, fn) {
    const id = setInterval(fn, ms);
    return () => clearInterval(id);
  },
};
