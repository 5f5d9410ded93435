/** Wire protocol: JSON control text plus binary frames. */

export const FRAME_MAGIC = 0x5047;
export const HEADER_BYTES = 8;

export const MODE_ENGINE = 0;
export const MODE_NEURAL = 1;

export type Mode = "engine" | "neural";

export interface Frame {
  seq: number;
  mode: number;
  /** Square RGB payload, row-major, 3 bytes per pixel. */
  side: number;
  rgb: Uint8Array;
}

export type DecodeResult =
  | { ok: true; frame: Frame }
  | { ok: false; reason: string };

/** Header: little-endian [magic u16, seq u32, mode u8, reserved u8]. */
export function decodeFrame(buf: ArrayBuffer): DecodeResult {
  if (buf.byteLength < HEADER_BYTES) {
    return { ok: false, reason: `short message (${buf.byteLength} bytes)` };
  }
  const view = new DataView(buf);
  const magic = view.getUint16(0, true);
  if (magic !== FRAME_MAGIC) {
    return { ok: false, reason: `bad magic 0x${magic.toString(16)}` };
  }
  const seq = view.getUint32(2, true);
  const mode = view.getUint8(6);
  const body = buf.byteLength - HEADER_BYTES;
  if (body === 0 || body % 3 !== 0) {
    return { ok: false, reason: `payload of ${body} bytes is not RGB` };
  }
  const side = Math.round(Math.sqrt(body / 3));
  if (side * side * 3 !== body) {
    return { ok: false, reason: `payload of ${body} bytes is not square` };
  }
  return {
    ok: true,
    frame: { seq, mode, side, rgb: new Uint8Array(buf, HEADER_BYTES) },
  };
}

export function encodeReset(seed: number, mode: Mode): string {
  return JSON.stringify({ type: "reset", seed, mode });
}

export function encodeAction(id: number, seq: number): string {
  return JSON.stringify({ type: "action", id, seq });
}

export function encodeConfig(ddimSteps: number): string {
  return JSON.stringify({ type: "config", ddim_steps: ddimSteps });
}

export type ServerText =
  | { type: "stats"; fps: number; seq: number }
  | { type: "error"; msg: string };

/** Unknown or malformed text is ignored, not fatal. */
export function parseServerText(raw: string): ServerText | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const rec = msg as Record<string, unknown>;
  if (rec.type === "stats" && typeof rec.fps === "number" && typeof rec.seq === "number") {
    return { type: "stats", fps: rec.fps, seq: rec.seq };
  }
  if (rec.type === "error" && typeof rec.msg === "string") {
    return { type: "error", msg: rec.msg };
  }
  return null;
}
