/** DOM wiring: socket, canvas, keyboard, HUD and controls. */

import { TRACKED_CODES } from "./keymap.js";
import { Frame, Mode } from "./protocol.js";
import { drawFrame } from "./render.js";
import { DDIM_CHOICES, MirrorFeed, PlaySession, SessionStats } from "./session.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("screen");
const mirrorCanvas = el<HTMLCanvasElement>("mirror");
const ctx = canvas.getContext("2d")!;
const mirrorCtx = mirrorCanvas.getContext("2d")!;

const seedInput = el<HTMLInputElement>("seed");
const resetButton = el<HTMLButtonElement>("reset");
const modeButton = el<HTMLButtonElement>("mode");
const compareBox = el<HTMLInputElement>("compare");
const slider = el<HTMLInputElement>("ddim");
const sliderLabel = el<HTMLSpanElement>("ddim-value");
const reconnectButton = el<HTMLButtonElement>("reconnect");
const hud = {
  status: el<HTMLSpanElement>("hud-status"),
  seq: el<HTMLSpanElement>("hud-seq"),
  fps: el<HTMLSpanElement>("hud-fps"),
  serverFps: el<HTMLSpanElement>("hud-server-fps"),
  dropped: el<HTMLSpanElement>("hud-dropped"),
  error: el<HTMLSpanElement>("hud-error"),
};

const wsUrl = `ws://${location.host}/ws`;
let session: PlaySession | null = null;
let mirror: MirrorFeed | null = null;
let mirrorSocket: WebSocket | null = null;
let currentMode: Mode = "engine";

function renderHud(stats: SessionStats): void {
  hud.status.textContent = stats.connected
    ? `${stats.mode ?? "connected"}`
    : "disconnected";
  hud.seq.textContent = String(Math.max(stats.lastSeq, 0));
  hud.fps.textContent = stats.displayedFps.toFixed(1);
  hud.serverFps.textContent = stats.serverFps.toFixed(1);
  hud.dropped.textContent = String(stats.dropped + stats.rejected);
  hud.error.textContent = stats.error ?? "";
  hud.error.classList.toggle("active", stats.error !== null);
  const disabled = !stats.connected;
  resetButton.disabled = disabled;
  modeButton.disabled = disabled;
  compareBox.disabled = disabled;
  slider.disabled = disabled;
  reconnectButton.hidden = stats.connected;
  modeButton.textContent = currentMode === "engine" ? "engine" : "neural";
}

function stopMirror(): void {
  mirrorSocket?.close();
  mirrorSocket = null;
  mirror = null;
}

function startMirror(): void {
  stopMirror();
  const sock = new WebSocket(wsUrl);
  sock.binaryType = "arraybuffer";
  const feed = new MirrorFeed(
    { send: (d) => sock.send(d), close: () => sock.close() },
    (frame: Frame) => drawFrame(mirrorCtx, frame),
  );
  sock.onopen = () => feed.reset(Number(seedInput.value) >>> 0);
  sock.onmessage = (ev) => {
    if (ev.data instanceof ArrayBuffer) feed.handleBinary(ev.data);
  };
  sock.onclose = () => {
    if (mirrorSocket === sock) stopMirror();
  };
  mirrorSocket = sock;
  mirror = feed;
}

function connect(): void {
  const sock = new WebSocket(wsUrl);
  sock.binaryType = "arraybuffer";
  const sess = new PlaySession(
    { send: (d) => sock.send(d), close: () => sock.close() },
    {
      onFrame: (frame) => drawFrame(ctx, frame),
      onChange: renderHud,
      onAction: (id) => mirror?.enqueue(id),
      onReset: (seed) => mirror?.reset(seed),
    },
  );
  sock.onopen = () => {
    sess.handleOpen();
    sess.start();
  };
  sock.onmessage = (ev) => {
    if (ev.data instanceof ArrayBuffer) {
      sess.handleBinary(ev.data);
    } else if (typeof ev.data === "string") {
      sess.handleText(ev.data);
    }
  };
  sock.onclose = () => {
    sess.stop();
    sess.handleClose();
  };
  session = sess;
}

window.addEventListener("keydown", (ev) => {
  if (TRACKED_CODES.has(ev.code)) {
    ev.preventDefault();
    session?.keyDown(ev.code);
  }
});
window.addEventListener("keyup", (ev) => {
  session?.keyUp(ev.code);
});

resetButton.addEventListener("click", () => {
  session?.reset(Number(seedInput.value) >>> 0, currentMode);
});
modeButton.addEventListener("click", () => {
  currentMode = currentMode === "engine" ? "neural" : "engine";
  session?.reset(Number(seedInput.value) >>> 0, currentMode);
});
compareBox.addEventListener("change", () => {
  mirrorCanvas.parentElement!.classList.toggle("hidden", !compareBox.checked);
  if (compareBox.checked) startMirror();
  else stopMirror();
});
slider.addEventListener("input", () => {
  const steps = DDIM_CHOICES[Number(slider.value)];
  sliderLabel.textContent = String(steps);
  session?.setDdimSteps(steps);
});
reconnectButton.addEventListener("click", () => {
  reconnectButton.hidden = true;
  connect();
});

connect();
