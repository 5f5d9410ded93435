import numpy as np
import pytest
import torch

from tilegen.evalkit import (
    Vam,
    VamConfig,
    load_vam,
    profile_vam,
    save_vam,
    train_vam,
    vam_accuracy,
    vam_predict,
    vam_window_probs,
)
from tilegen.evalkit.vam import _EpisodeSource

TINY = VamConfig(
    frame_px=32,
    window=8,
    radius=2,
    conv_channels=(8, 8, 16),
    embed_dim=32,
    depth=1,
    heads=2,
    learning_rate=1e-3,
    batch_size=4,
)


def _labeled_episodes(episodes, timesteps, seed):
    """Frame t+1 carries a color patch encoding actions[t]; readable task."""
    rng = np.random.default_rng(seed)
    actions = rng.integers(0, 7, (episodes, timesteps)).astype(np.uint8)
    frames = np.full((episodes, timesteps, 32, 32, 3), 120, dtype=np.uint8)
    for e in range(episodes):
        for t in range(timesteps - 1):
            frames[e, t + 1, :8, :8] = actions[e, t] * 36
    return frames, actions


def test_config_invariants():
    with pytest.raises(ValueError):
        VamConfig(window=16, radius=8)
    with pytest.raises(ValueError):
        VamConfig(conv_channels=(32, 64))
    with pytest.raises(ValueError):
        VamConfig(conv_channels=(30, 64, 96))
    with pytest.raises(ValueError):
        VamConfig(frame_px=60)
    with pytest.raises(ValueError):
        VamConfig(embed_dim=100, heads=3)
    assert profile_vam("desk").window == 32
    assert profile_vam("paper").frame_px == 128
    with pytest.raises(ValueError):
        profile_vam("laptop")


def test_forward_shapes_and_window_bounds():
    torch.manual_seed(0)
    model = Vam(TINY)
    x = torch.zeros(2, 8, 3, 32, 32)
    assert model(x).shape == (2, 8, 7)
    assert model(x[:, :5]).shape == (2, 5, 7)
    with pytest.raises(ValueError):
        model(torch.zeros(2, 9, 3, 32, 32))
    with pytest.raises(ValueError):
        model(torch.zeros(2, 4, 3, 16, 16))
    with pytest.raises(ValueError):
        model(torch.zeros(2, 8, 1, 32, 32))


def test_predict_simplex_and_context_errors():
    torch.manual_seed(1)
    model = Vam(TINY).eval()
    frames = np.random.default_rng(2).integers(0, 255, (8, 32, 32, 3)).astype(np.uint8)
    probs = vam_predict(model, frames, 3)
    assert probs.shape == (7,)
    assert np.all(probs >= 0)
    assert abs(probs.sum() - 1.0) <= 1e-6
    assert np.array_equal(vam_predict(model, frames, 3), probs)
    with pytest.raises(ValueError):
        vam_predict(model, frames, 1)
    with pytest.raises(ValueError):
        vam_predict(model, frames, 6)
    with pytest.raises(ValueError):
        vam_predict(model, frames[..., :1], 3)


def test_window_probs_cover_all_targets():
    torch.manual_seed(3)
    model = Vam(TINY).eval()
    rng = np.random.default_rng(4)
    for n in (8, 11, 12, 21):
        frames = rng.integers(0, 255, (n, 32, 32, 3)).astype(np.uint8)
        probs = vam_window_probs(model, frames)
        assert probs.shape == (n - 4, 7)
        assert not np.any(np.isnan(probs))
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-5)
    with pytest.raises(ValueError):
        vam_window_probs(model, rng.integers(0, 255, (7, 32, 32, 3)).astype(np.uint8))


def test_untrained_accuracy_near_chance():
    torch.manual_seed(5)
    model = Vam(TINY).eval()
    frames, actions = _labeled_episodes(8, 76, seed=6)
    source = _EpisodeSource((frames, actions))
    acc = vam_accuracy(model, source, range(8))
    assert abs(acc - 1.0 / 7) <= 0.05


def test_train_vam_learns_readable_actions(tmp_path):
    frames, actions = _labeled_episodes(5, 20, seed=7)
    result = train_vam((frames, actions), TINY, steps=500, seed=11,
                       out=tmp_path / "vam.ckpt", holdout_fraction=0.2)
    first = float(np.mean([r["loss"] for r in result.losses[:10]]))
    last = float(np.mean([r["loss"] for r in result.losses[-10:]]))
    assert last <= 0.7 * first
    assert result.holdout_accuracy >= 0.25

    loaded = load_vam(tmp_path / "vam.ckpt")
    assert loaded.step == 500
    assert loaded.extra["holdout_accuracy"] == pytest.approx(result.holdout_accuracy)
    for name, param in result.model.state_dict().items():
        assert torch.equal(loaded.model.state_dict()[name], param)


def test_train_vam_deterministic():
    frames, actions = _labeled_episodes(3, 12, seed=8)
    a = train_vam((frames, actions), TINY, steps=6, seed=9)
    b = train_vam((frames, actions), TINY, steps=6, seed=9)
    assert [r["loss"] for r in a.losses] == [r["loss"] for r in b.losses]
    c = train_vam((frames, actions), TINY, steps=6, seed=10)
    assert [r["loss"] for r in a.losses] != [r["loss"] for r in c.losses]


def test_train_vam_input_validation():
    frames, actions = _labeled_episodes(2, 6, seed=0)
    with pytest.raises(ValueError):
        train_vam((frames, actions), TINY, steps=1, seed=0)
    empty = np.zeros((0, 12, 32, 32, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        train_vam((empty, np.zeros((0, 12), dtype=np.uint8)), TINY, steps=1, seed=0)
    with pytest.raises(ValueError):
        train_vam((frames[:, :, 0], actions), TINY, steps=1, seed=0)


def test_save_load_rejects_other_kinds(tmp_path):
    torch.manual_seed(12)
    model = Vam(TINY)
    save_vam(tmp_path / "m.ckpt", model)
    from tilegen.worldmodel.checkpoint import CheckpointError, load_checkpoint, save_checkpoint

    ckpt = load_checkpoint(tmp_path / "m.ckpt")
    save_checkpoint(tmp_path / "bad.ckpt", "vae", ckpt.config, ckpt.tensors)
    with pytest.raises(CheckpointError):
        load_vam(tmp_path / "bad.ckpt")
