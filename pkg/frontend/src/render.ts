/** Frame pixels to canvas. */

import { Frame } from "./protocol.js";

/** RGB triples to RGBA with opaque alpha. */
export function expandRgba(rgb: Uint8Array): Uint8ClampedArray<ArrayBuffer> {
  const pixels = rgb.length / 3;
  const out = new Uint8ClampedArray(new ArrayBuffer(pixels * 4));
  for (let i = 0; i < pixels; i += 1) {
    out[i * 4] = rgb[i * 3];
    out[i * 4 + 1] = rgb[i * 3 + 1];
    out[i * 4 + 2] = rgb[i * 3 + 2];
    out[i * 4 + 3] = 255;
  }
  return out;
}

/** Blits at native size; CSS scales the canvas up with crisp pixels. */
export function drawFrame(ctx: CanvasRenderingContext2D, frame: Frame): void {
  if (ctx.canvas.width !== frame.side || ctx.canvas.height !== frame.side) {
    ctx.canvas.width = frame.side;
    ctx.canvas.height = frame.side;
  }
  ctx.putImageData(new ImageData(expandRgba(frame.rgb), frame.side, frame.side), 0, 0);
}
