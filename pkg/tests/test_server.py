import json
import struct

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient
from starlette.websockets import WebSocketDisconnect

from tilegen.server import (
    FRAME_MAGIC,
    MODE_ENGINE,
    MODE_NEURAL,
    ServerState,
    Session,
    build_state,
    create_app,
)
from tilegen.tilequest import gen_level, render_array, reset
from tilegen.worldmodel import (
    Dit,
    LdmConfig,
    NoiseSchedule,
    Vae,
    VaeConfig,
    rollout,
    save_ldm,
    save_vae,
)

_HEADER = struct.Struct("<HIBB")

LDM_CFG = LdmConfig(dit_depth=1, hidden_size=32, heads=2, sequence_length=4,
                    action_embed_dim=16, k_embed_dim=16, z_channels=8,
                    latent_channels=4, latent_hw=8)
VAE_CFG = VaeConfig(frame_px=32, base_channels=16)


def _engine_app():
    return create_app(build_state(level_seed=3, level_width=24))


def _unpack(data, frame_px):
    magic, seq, mode, reserved = _HEADER.unpack_from(data)
    assert magic == FRAME_MAGIC
    assert reserved == 0
    body = np.frombuffer(data[_HEADER.size:], dtype=np.uint8)
    return seq, mode, body.reshape(frame_px, frame_px, 3)


def _next_frame(ws):
    """Next binary frame, letting interleaved stats messages pass."""
    while True:
        msg = ws.receive()
        if msg.get("bytes") is not None:
            return msg["bytes"]
        assert json.loads(msg["text"])["type"] == "stats"


@pytest.fixture(scope="module")
def neural_paths(tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt")
    torch.manual_seed(7)
    model = Dit(LDM_CFG).eval()
    with torch.no_grad():
        model.v_conv2.weight.normal_(0, 0.02)
    vae = Vae(VAE_CFG).eval()
    save_ldm(out / "ldm.ckpt", model, extra={"latent_scale": 2.5})
    save_vae(out / "vae.ckpt", vae)
    return out / "ldm.ckpt", out / "vae.ckpt"


def test_engine_reset_and_actions_in_order():
    client = TestClient(_engine_app())
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "reset", "seed": 5, "mode": "engine"}))
        seq, mode, frame = _unpack(ws.receive_bytes(), 64)
        assert seq == 0
        assert mode == MODE_ENGINE
        level = gen_level(3, 24)
        assert np.array_equal(frame, render_array(reset(level, 5), level, 8))
        for i in range(1, 101):
            ws.send_text(json.dumps({"type": "action", "id": i % 7, "seq": i}))
            seq, mode, _ = _unpack(_next_frame(ws), 64)
            assert seq == i
            assert mode == MODE_ENGINE


def test_reset_determinism_and_mode_switch():
    client = TestClient(_engine_app())
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "reset", "seed": 9, "mode": "engine"}))
        first = ws.receive_bytes()
        ws.send_text(json.dumps({"type": "action", "id": 2, "seq": 1}))
        ws.receive_bytes()
        ws.send_text(json.dumps({"type": "reset", "seed": 9, "mode": "engine"}))
        again = ws.receive_bytes()
        assert again == first
        seq, _, _ = _unpack(again, 64)
        assert seq == 0


def test_engine_noop_equilibrium():
    client = TestClient(_engine_app())
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "reset", "seed": 1, "mode": "engine"}))
        ws.receive_bytes()
        frames = []
        for i in range(6):
            ws.send_text(json.dumps({"type": "action", "id": 0, "seq": i + 1}))
            frames.append(ws.receive_bytes()[_HEADER.size:])
        assert frames[-1] == frames[-2]


def test_unknown_action_errors_and_continues():
    client = TestClient(_engine_app())
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "reset", "seed": 2, "mode": "engine"}))
        ws.receive_bytes()
        ws.send_text(json.dumps({"type": "action", "id": 9, "seq": 1}))
        err = json.loads(ws.receive_text())
        assert err["type"] == "error"
        assert "unknown action" in err["msg"]
        ws.send_text(json.dumps({"type": "action", "id": 0, "seq": 1}))
        seq, _, _ = _unpack(ws.receive_bytes(), 64)
        assert seq == 1


def test_action_before_reset_errors():
    client = TestClient(_engine_app())
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "action", "id": 0, "seq": 1}))
        err = json.loads(ws.receive_text())
        assert err["type"] == "error"
        assert "reset" in err["msg"]
        ws.send_text(json.dumps({"type": "reset", "seed": 0, "mode": "engine"}))
        seq, _, _ = _unpack(ws.receive_bytes(), 64)
        assert seq == 0


def test_malformed_json_errors_then_closes():
    client = TestClient(_engine_app())
    with client.websocket_connect("/ws") as ws:
        ws.send_text("{not json")
        err = json.loads(ws.receive_text())
        assert err["type"] == "error"
        with pytest.raises(WebSocketDisconnect):
            ws.receive_text()


def test_unknown_type_closes():
    client = TestClient(_engine_app())
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "dance"}))
        err = json.loads(ws.receive_text())
        assert err["type"] == "error"
        with pytest.raises(WebSocketDisconnect):
            ws.receive_text()


def test_neural_without_model_errors_and_continues():
    client = TestClient(_engine_app())
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "reset", "seed": 0, "mode": "neural"}))
        err = json.loads(ws.receive_text())
        assert err["type"] == "error"
        assert "no model" in err["msg"]
        ws.send_text(json.dumps({"type": "reset", "seed": 0, "mode": "engine"}))
        _unpack(ws.receive_bytes(), 64)


def test_config_validation():
    client = TestClient(_engine_app())
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "config", "ddim_steps": 65}))
        err = json.loads(ws.receive_text())
        assert err["type"] == "error"
        ws.send_text(json.dumps({"type": "config", "ddim_steps": 8}))
        ws.send_text(json.dumps({"type": "reset", "seed": 0, "mode": "engine"}))
        _unpack(ws.receive_bytes(), 64)


def test_stats_after_thirty_frames():
    client = TestClient(_engine_app())
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "reset", "seed": 4, "mode": "engine"}))
        ws.receive_bytes()
        for i in range(29):
            ws.send_text(json.dumps({"type": "action", "id": 0, "seq": i + 1}))
            ws.receive_bytes()
        stats = json.loads(ws.receive_text())
        assert stats["type"] == "stats"
        assert stats["seq"] == 29
        assert stats["fps"] > 0


def test_session_fps_matches_ring_mean():
    state = build_state(level_seed=3, level_width=24)
    session = Session(state)
    session.ring.extend([0.01, 0.02, 0.03])
    assert session.fps() == pytest.approx(1.0 / 0.02, rel=1e-9)
    empty = Session(state)
    assert empty.fps() == 0.0


def test_two_sessions_isolated():
    client = TestClient(_engine_app())
    with client.websocket_connect("/ws") as a, client.websocket_connect("/ws") as b:
        a.send_text(json.dumps({"type": "reset", "seed": 1, "mode": "engine"}))
        b.send_text(json.dumps({"type": "reset", "seed": 1, "mode": "engine"}))
        fa = a.receive_bytes()
        fb = b.receive_bytes()
        assert fa == fb
        for _ in range(3):
            a.send_text(json.dumps({"type": "action", "id": 2, "seq": 1}))
            fa1 = a.receive_bytes()
        b.send_text(json.dumps({"type": "action", "id": 0, "seq": 1}))
        fb1 = b.receive_bytes()
        assert _unpack(fa1, 64)[0] == 3
        assert _unpack(fb1, 64)[0] == 1
        assert fa1[_HEADER.size:] != fb1[_HEADER.size:]

    solo = TestClient(_engine_app())
    with solo.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "reset", "seed": 1, "mode": "engine"}))
        assert ws.receive_bytes() == fa
        for _ in range(3):
            ws.send_text(json.dumps({"type": "action", "id": 2, "seq": 1}))
            last = ws.receive_bytes()
        assert last == fa1


def test_neural_mode_matches_rollout(neural_paths):
    model_path, vae_path = neural_paths
    state = build_state(model_path=model_path, vae_path=vae_path,
                        level_seed=3, level_width=24)
    assert state.latent_scale == 2.5
    app = create_app(state)
    client = TestClient(app)
    actions = [2, 3, 0, 5]
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "reset", "seed": 11, "mode": "neural"}))
        seq, mode, first = _unpack(ws.receive_bytes(), 32)
        assert seq == 0
        assert mode == MODE_NEURAL
        level = gen_level(3, 24)
        gt_first = render_array(reset(level, 11), level, 4)
        assert np.array_equal(first, gt_first)
        got = []
        for i, act in enumerate(actions):
            ws.send_text(json.dumps({"type": "action", "id": act, "seq": i + 1}))
            seq, mode, frame = _unpack(ws.receive_bytes(), 32)
            assert seq == i + 1
            got.append(frame)

    sched = NoiseSchedule(LDM_CFG.levels)
    from tilegen.worldmodel import load_ldm, load_vae

    ldm = load_ldm(model_path)
    vae = load_vae(vae_path)
    want = rollout(ldm.model, vae.model, sched, gt_first, actions,
                   steps=4, seed=11, latent_scale=2.5)
    assert np.array_equal(np.stack(got), want)


def test_build_state_validation(tmp_path, neural_paths):
    model_path, vae_path = neural_paths
    with pytest.raises(ValueError):
        build_state(model_path=model_path)
    with pytest.raises(ValueError):
        build_state(vae_path=vae_path)
    torch.manual_seed(0)
    other = Vae(VaeConfig(frame_px=64, base_channels=16))
    save_vae(tmp_path / "wide.ckpt", other)
    with pytest.raises(ValueError):
        build_state(model_path=model_path, vae_path=tmp_path / "wide.ckpt")


def test_static_mount_serves_client_assets(tmp_path):
    (tmp_path / "index.html").write_text("<!DOCTYPE html><title>play</title>")
    (tmp_path / "main.js").write_text("export {};")
    app = create_app(build_state(level_seed=3, level_width=24), static_dir=tmp_path)
    client = TestClient(app)
    assert client.get("/").status_code == 200
    assert "play" in client.get("/").text
    assert client.get("/main.js").status_code == 200
    assert client.get("/missing.js").status_code == 404
    # The socket endpoint still wins over the static mount.
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "reset", "seed": 1, "mode": "engine"}))
        seq, mode, _ = _unpack(_next_frame(ws), 64)
        assert (seq, mode) == (0, MODE_ENGINE)


def test_no_static_mount_leaves_root_unbound():
    client = TestClient(_engine_app())
    assert client.get("/").status_code == 404
