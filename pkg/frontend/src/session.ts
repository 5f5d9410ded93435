/** Client session state machine, decoupled from DOM and socket. */

import { Clock, systemClock } from "./clock.js";
import { keyToAction, TRACKED_CODES } from "./keymap.js";
import {
  decodeFrame,
  encodeAction,
  encodeConfig,
  encodeReset,
  Frame,
  Mode,
  parseServerText,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
}

export interface SessionStats {
  connected: boolean;
  mode: Mode | null;
  /** Last displayed frame sequence number, -1 before the first frame. */
  lastSeq: number;
  displayedFps: number;
  serverFps: number;
  dropped: number;
  rejected: number;
  actionsSent: number;
  ddimSteps: number;
  seed: number;
  pending: boolean;
  error: string | null;
}

export interface SessionOptions {
  clock?: Clock;
  /** Auto-repeat period; 50 ms gives the 20 actions/sec cadence. */
  intervalMs?: number;
  fpsWindowMs?: number;
  onFrame?: (frame: Frame) => void;
  onChange?: (stats: SessionStats) => void;
  onAction?: (id: number) => void;
  onReset?: (seed: number, mode: Mode) => void;
}

export const DEFAULT_INTERVAL_MS = 50;
export const DEFAULT_DDIM_STEPS = 4;
export const DDIM_CHOICES = [4, 8, 16] as const;

export class PlaySession {
  private readonly socket: SocketLike;
  private readonly clock: Clock;
  private readonly intervalMs: number;
  private readonly fpsWindowMs: number;
  private readonly opts: SessionOptions;

  private readonly pressed = new Set<string>();
  private displays: number[] = [];
  private cancelTimer: (() => void) | null = null;

  private connected = false;
  private mode: Mode | null = null;
  private lastSeq = -1;
  private serverFps = 0;
  private dropped = 0;
  private rejected = 0;
  private actionsSent = 0;
  private ddimSteps = DEFAULT_DDIM_STEPS;
  private seed = 0;
  private pending = false;
  /** Set by a server error; actions stay paused until a frame arrives. */
  private blocked = false;
  private error: string | null = null;

  constructor(socket: SocketLike, opts: SessionOptions = {}) {
    this.socket = socket;
    this.clock = opts.clock ?? systemClock;
    this.intervalMs = opts.intervalMs ?? DEFAULT_INTERVAL_MS;
    this.fpsWindowMs = opts.fpsWindowMs ?? 1000;
    this.opts = opts;
  }

  start(): void {
    if (this.cancelTimer === null) {
      this.cancelTimer = this.clock.every(this.intervalMs, () => this.tick());
    }
  }

  stop(): void {
    if (this.cancelTimer !== null) {
      this.cancelTimer();
      this.cancelTimer = null;
    }
  }

  // Socket adapter entry points.

  handleOpen(): void {
    this.connected = true;
    this.error = null;
    this.changed();
  }

  handleClose(): void {
    this.connected = false;
    this.mode = null;
    this.pending = false;
    this.blocked = false;
    this.changed();
  }

  handleBinary(buf: ArrayBuffer): void {
    // Every binary message answers one control message, so the
    // in-flight slot is free again no matter how decoding goes.
    this.pending = false;
    const res = decodeFrame(buf);
    if (!res.ok) {
      this.rejected += 1;
      this.error = res.reason;
      this.changed();
      return;
    }
    const frame = res.frame;
    if (frame.seq === 0) {
      // Reset acknowledgement: the sequence starts over.
      this.lastSeq = 0;
    } else if (frame.seq <= this.lastSeq) {
      this.dropped += 1;
      this.changed();
      return;
    } else {
      this.lastSeq = frame.seq;
    }
    this.blocked = false;
    const now = this.clock.now();
    this.displays.push(now);
    this.pruneDisplays(now);
    this.opts.onFrame?.(frame);
    this.changed();
  }

  handleText(raw: string): void {
    const msg = parseServerText(raw);
    if (msg === null) return;
    if (msg.type === "stats") {
      this.serverFps = msg.fps;
    } else {
      this.error = msg.msg;
      this.pending = false;
      this.blocked = true;
    }
    this.changed();
  }

  // User intents.

  reset(seed: number, mode: Mode): void {
    if (!this.connected) return;
    this.seed = seed;
    this.mode = mode;
    this.error = null;
    // A reset produces exactly one frame, so it occupies the same
    // in-flight slot as an action; ticks skip until the ack arrives.
    this.pending = true;
    this.socket.send(encodeReset(seed, mode));
    this.opts.onReset?.(seed, mode);
    this.changed();
  }

  toggleMode(): void {
    if (!this.connected || this.mode === null) return;
    this.reset(this.seed, this.mode === "engine" ? "neural" : "engine");
  }

  /** Emits exactly one config message per value change. */
  setDdimSteps(steps: number): void {
    if (!this.connected || steps === this.ddimSteps) return;
    this.ddimSteps = steps;
    this.socket.send(encodeConfig(steps));
    this.changed();
  }

  keyDown(code: string): void {
    if (TRACKED_CODES.has(code)) this.pressed.add(code);
  }

  keyUp(code: string): void {
    this.pressed.delete(code);
  }

  stats(): SessionStats {
    const now = this.clock.now();
    this.pruneDisplays(now);
    return {
      connected: this.connected,
      mode: this.mode,
      lastSeq: this.lastSeq,
      displayedFps: (this.displays.length * 1000) / this.fpsWindowMs,
      serverFps: this.serverFps,
      dropped: this.dropped,
      rejected: this.rejected,
      actionsSent: this.actionsSent,
      ddimSteps: this.ddimSteps,
      seed: this.seed,
      pending: this.pending,
      error: this.error,
    };
  }

  private tick(): void {
    // At most one in-flight action; ticks are skipped, not queued.
    if (!this.connected || this.mode === null || this.pending || this.blocked) {
      return;
    }
    const id = keyToAction(this.pressed);
    this.actionsSent += 1;
    this.pending = true;
    this.socket.send(encodeAction(id, this.actionsSent));
    this.opts.onAction?.(id);
  }

  private pruneDisplays(now: number): void {
    while (this.displays.length > 0 && this.displays[0] <= now - this.fpsWindowMs) {
      this.displays.shift();
    }
  }

  private changed(): void {
    this.opts.onChange?.(this.stats());
  }
}

/**
 * Read-only side view: replays the action stream of a main session on a
 * second connection, preserving order with its own in-flight slot.
 */
export class MirrorFeed {
  private readonly socket: SocketLike;
  private readonly onFrame?: (frame: Frame) => void;
  private queue: number[] = [];
  private pending = false;
  private lastSeq = -1;
  private mirrorSeq = 0;

  constructor(socket: SocketLike, onFrame?: (frame: Frame) => void) {
    this.socket = socket;
    this.onFrame = onFrame;
  }

  reset(seed: number): void {
    this.queue = [];
    this.pending = false;
    this.socket.send(encodeReset(seed, "engine"));
  }

  enqueue(id: number): void {
    if (this.pending) {
      this.queue.push(id);
    } else {
      this.pending = true;
      this.mirrorSeq += 1;
      this.socket.send(encodeAction(id, this.mirrorSeq));
    }
  }

  handleBinary(buf: ArrayBuffer): void {
    this.pending = false;
    const res = decodeFrame(buf);
    if (res.ok) {
      const frame = res.frame;
      if (frame.seq === 0) {
        this.lastSeq = 0;
        this.onFrame?.(frame);
      } else if (frame.seq > this.lastSeq) {
        this.lastSeq = frame.seq;
        this.onFrame?.(frame);
      }
    }
    const next = this.queue.shift();
    if (next !== undefined) {
      this.pending = true;
      this.mirrorSeq += 1;
      this.socket.send(encodeAction(next, this.mirrorSeq));
    }
  }
}
