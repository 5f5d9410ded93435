"""Real-time play service over a browser-compatible socket.

Each connection owns an isolated session that streams binary frames in
response to JSON control messages. Model weights are shared read-only.
"""

from __future__ import annotations

import json
import struct
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import torch
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .rng import mix
from .tilequest.engine import Action, GameState, reset, step
from .tilequest.render import render_array
from .tilequest.tiles import TileMap, gen_level
from .worldmodel.dit import LoadedLdm, load_ldm
from .worldmodel.sampler import ddim_next, prime_hidden
from .worldmodel.schedule import NoiseSchedule
from .worldmodel.vae import LoadedVae, load_vae, tensor_to_frames

FRAME_MAGIC = 0x5047
MODE_ENGINE = 0
MODE_NEURAL = 1
_HEADER = struct.Struct("<HIBB")
_MASK63 = (1 << 63) - 1
_STATS_EVERY = 30
_RING = 120


@dataclass
class ServerState:
    """Read-only resources shared by every session."""

    level: TileMap
    tile_px: int
    ldm: LoadedLdm | None = None
    vae: LoadedVae | None = None
    schedule: NoiseSchedule | None = None
    latent_scale: float = 1.0

    @property
    def frame_px(self) -> int:
        return 8 * self.tile_px


def build_state(
    model_path=None,
    vae_path=None,
    level_seed: int = 3,
    level_width: int = 32,
) -> ServerState:
    """Load checkpoints and the level; any load failure aborts startup."""
    level = gen_level(level_seed, level_width)
    ldm = load_ldm(model_path) if model_path is not None else None
    vae = load_vae(vae_path) if vae_path is not None else None
    if (ldm is None) != (vae is None):
        raise ValueError("neural mode needs both --model and --vae checkpoints")
    schedule = None
    tile_px = 8
    latent_scale = 1.0
    if ldm is not None:
        cfg = ldm.cfg
        schedule = NoiseSchedule(cfg.levels, cfg.logsnr_max, cfg.logsnr_min)
        latent_scale = float(ldm.extra.get("latent_scale", 1.0))
        if vae.cfg.latent_hw != cfg.latent_hw or vae.cfg.latent_channels != cfg.latent_channels:
            raise ValueError("vae and model checkpoints disagree on latent shape")
        tile_px = vae.cfg.frame_px // 8
    return ServerState(
        level=level, tile_px=tile_px, ldm=ldm, vae=vae,
        schedule=schedule, latent_scale=latent_scale,
    )


class ProtocolError(Exception):
    """Structural violation: error message then close."""


class SessionError(Exception):
    """Semantic violation: error message, session continues."""


@dataclass
class Session:
    state: ServerState
    mode: int | None = None
    seq: int = 0
    ddim_steps: int = 4
    game: GameState | None = None
    z: torch.Tensor | None = None
    gen: torch.Generator | None = None
    ring: deque = field(default_factory=lambda: deque(maxlen=_RING))
    frames_since_stats: int = 0

    def reset(self, seed: int, mode: str) -> bytes:
        if mode == "engine":
            self.mode = MODE_ENGINE
        elif mode == "neural":
            if self.state.ldm is None:
                raise SessionError("no model loaded; neural mode unavailable")
            self.mode = MODE_NEURAL
        else:
            raise ProtocolError(f"unknown mode {mode!r}")
        start = time.perf_counter()
        self.game = reset(self.state.level, seed)
        frame = render_array(self.game, self.state.level, self.state.tile_px)
        if self.mode == MODE_NEURAL:
            self.z = prime_hidden(
                self.state.ldm.model, self.state.vae.model, frame,
                self.state.latent_scale,
            )
            self.gen = torch.Generator()
            self.gen.manual_seed(mix(seed, 0xD1F) & _MASK63)
        self.seq = 0
        self.ring.clear()
        self.frames_since_stats = 0
        self.ring.append(time.perf_counter() - start)
        return self._pack(frame)

    def action(self, action_id: int) -> bytes:
        if self.mode is None:
            raise SessionError("reset required before actions")
        if not 0 <= action_id < len(Action):
            raise SessionError(f"unknown action {action_id}")
        start = time.perf_counter()
        if self.mode == MODE_ENGINE:
            self.game, _ = step(self.game, self.state.level, Action(action_id))
            frame = render_array(self.game, self.state.level, self.state.tile_px)
        else:
            x, self.z = ddim_next(
                self.state.ldm.model, self.state.schedule, self.z,
                action_id, self.ddim_steps, self.gen,
            )
            decoded = self.state.vae.model.decode(x / self.state.latent_scale)
            frame = tensor_to_frames(decoded)[0]
        self.seq += 1
        self.ring.append(time.perf_counter() - start)
        return self._pack(frame)

    def configure(self, ddim_steps: int) -> None:
        if not 1 <= ddim_steps <= 64:
            raise SessionError(f"ddim_steps {ddim_steps} outside [1, 64]")
        self.ddim_steps = ddim_steps

    def fps(self) -> float:
        if not self.ring:
            return 0.0
        return 1.0 / (sum(self.ring) / len(self.ring))

    def _pack(self, frame: np.ndarray) -> bytes:
        self.frames_since_stats += 1
        return _HEADER.pack(FRAME_MAGIC, self.seq, self.mode, 0) + frame.tobytes()


def _parse(raw: str) -> dict:
    try:
        msg = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ProtocolError(f"malformed JSON: {err}") from err
    if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
        raise ProtocolError("control message must be an object with a type")
    return msg


def _field(msg: dict, key: str, kind=int) -> int:
    value = msg.get(key)
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ProtocolError(f"{msg['type']}: field {key!r} must be {kind.__name__}")
    return value


def create_app(state: ServerState, static_dir=None) -> FastAPI:
    app = FastAPI()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session = Session(state)
        try:
            while True:
                packet = await ws.receive()
                if packet["type"] == "websocket.disconnect":
                    break
                if packet.get("text") is None:
                    raise ProtocolError("binary control messages not supported")
                msg = _parse(packet["text"])
                try:
                    frame = _dispatch(session, msg)
                except SessionError as err:
                    await ws.send_text(json.dumps({"type": "error", "msg": str(err)}))
                    continue
                if frame is not None:
                    await ws.send_bytes(frame)
                    if session.frames_since_stats >= _STATS_EVERY:
                        session.frames_since_stats = 0
                        await ws.send_text(json.dumps({
                            "type": "stats",
                            "fps": session.fps(),
                            "seq": session.seq,
                        }))
        except ProtocolError as err:
            await ws.send_text(json.dumps({"type": "error", "msg": str(err)}))
            await ws.close(code=1002)
        except WebSocketDisconnect:
            pass

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True))
    return app


def _dispatch(session: Session, msg: dict) -> bytes | None:
    kind = msg["type"]
    if kind == "reset":
        seed = _field(msg, "seed")
        mode = msg.get("mode")
        if not isinstance(mode, str):
            raise ProtocolError("reset: field 'mode' must be str")
        if seed < 0:
            raise ProtocolError("reset: seed must be non-negative")
        return session.reset(seed, mode)
    if kind == "action":
        return session.action(_field(msg, "id"))
    if kind == "config":
        session.configure(_field(msg, "ddim_steps"))
        return None
    raise ProtocolError(f"unknown message type {kind!r}")


def serve(state: ServerState, host: str, port: int, static_dir=None) -> None:
    import uvicorn

    uvicorn.run(
        create_app(state, static_dir=static_dir),
        host=host, port=port, log_level="warning",
    )
