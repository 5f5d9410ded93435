/** Deterministic clock and a scripted stub server for session tests. */

import { Clock } from "../src/clock.js";
import { FRAME_MAGIC, HEADER_BYTES } from "../src/protocol.js";
import { PlaySession, SocketLike } from "../src/session.js";

interface Scheduled {
  at: number;
  order: number;
  fn: () => void;
  everyMs: number | null;
}

export class ManualClock implements Clock {
  private t = 0;
  private counter = 0;
  private queue: Scheduled[] = [];

  now(): number {
    return this.t;
  }

  every(ms: number, fn: () => void): () => void {
    const item: Scheduled = { at: this.t + ms, order: this.counter++, fn, everyMs: ms };
    this.queue.push(item);
    return () => {
      this.queue = this.queue.filter((q) => q !== item);
    };
  }

  after(ms: number, fn: () => void): void {
    this.queue.push({ at: this.t + ms, order: this.counter++, fn, everyMs: null });
  }

  /** Runs every due callback in time order, then lands on t + dt. */
  advance(dt: number): void {
    const end = this.t + dt;
    for (;;) {
      let next: Scheduled | null = null;
      for (const item of this.queue) {
        if (item.at > end) continue;
        if (
          next === null ||
          item.at < next.at ||
          (item.at === next.at && item.order < next.order)
        ) {
          next = item;
        }
      }
      if (next === null) break;
      this.t = next.at;
      if (next.everyMs === null) {
        this.queue = this.queue.filter((q) => q !== next);
      } else {
        next.at += next.everyMs;
        next.order = this.counter++;
      }
      next.fn();
    }
    this.t = end;
  }
}

export function makeFrame(
  seq: number,
  opts: { magic?: number; mode?: number; side?: number; extraBytes?: number } = {},
): ArrayBuffer {
  const side = opts.side ?? 8;
  const body = side * side * 3 + (opts.extraBytes ?? 0);
  const buf = new ArrayBuffer(HEADER_BYTES + body);
  const view = new DataView(buf);
  view.setUint16(0, opts.magic ?? FRAME_MAGIC, true);
  view.setUint32(2, seq, true);
  view.setUint8(6, opts.mode ?? 0);
  view.setUint8(7, 0);
  new Uint8Array(buf, HEADER_BYTES).fill(seq & 0xff);
  return buf;
}

/**
 * Answers resets and actions with in-order frames after latencyMs,
 * mirroring the real server's one-reply-per-message pacing.
 */
export class StubServer implements SocketLike {
  sent: string[] = [];
  latencyMs = 0;
  closed = false;
  private seq = 0;
  private session: PlaySession | null = null;

  constructor(private clock: ManualClock) {}

  attach(session: PlaySession): void {
    this.session = session;
  }

  send(raw: string): void {
    this.sent.push(raw);
    const msg = JSON.parse(raw) as { type: string };
    if (msg.type === "config") return;
    if (msg.type === "reset") this.seq = 0;
    else this.seq += 1;
    const frame = makeFrame(this.seq);
    const deliver = () => this.session?.handleBinary(frame);
    if (this.latencyMs > 0) this.clock.after(this.latencyMs, deliver);
    else deliver();
  }

  close(): void {
    this.closed = true;
  }

  sentOfType(type: string): string[] {
    return this.sent.filter((raw) => (JSON.parse(raw) as { type: string }).type === type);
  }
}
