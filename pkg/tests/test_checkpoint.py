import numpy as np
import pytest

from tilegen import kvconfig
from tilegen.worldmodel import CheckpointError, load_checkpoint, save_checkpoint
from tilegen.worldmodel.config import (
    DESK_LDM,
    LdmConfig,
    LongtailConfig,
    PAPER_LDM,
    PAPER_VAE,
    VaeConfig,
    profile_ldm,
    profile_vae,
)


def test_checkpoint_roundtrip(tmp_path):
    path = tmp_path / "model.ckpt"
    tensors = {
        "w": np.arange(12, dtype=np.float32).reshape(3, 4),
        "b": np.array(2.5, dtype=np.float32),
    }
    save_checkpoint(path, "vae", {"frame_px": 64}, tensors, step=7, extra={"seed": 3})
    ckpt = load_checkpoint(path)
    assert ckpt.kind == "vae"
    assert ckpt.config == {"frame_px": 64}
    assert ckpt.step == 7
    assert ckpt.extra == {"seed": 3}
    assert ckpt.tensors["w"].dtype == np.float32
    assert np.array_equal(ckpt.tensors["w"], tensors["w"])
    assert ckpt.tensors["b"].shape == ()
    assert float(ckpt.tensors["b"]) == 2.5


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    save_checkpoint(path, "vae", {}, {"w": np.zeros(2, dtype=np.float32)})
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "trunc.ckpt"
    save_checkpoint(path, "vae", {}, {"w": np.zeros(8, dtype=np.float32)})
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_trailing_bytes(tmp_path):
    path = tmp_path / "trail.ckpt"
    save_checkpoint(path, "vae", {}, {"w": np.zeros(8, dtype=np.float32)})
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_kv_parse_basics():
    text = "# comment\nalpha = 3\n\nbeta= 1.5 # trailing note\nname = desk\n"
    assert kvconfig.parse_kv(text) == {"alpha": "3", "beta": "1.5", "name": "desk"}


def test_kv_parse_errors():
    with pytest.raises(ValueError):
        kvconfig.parse_kv("no equals sign here")
    with pytest.raises(ValueError):
        kvconfig.parse_kv("a = 1\na = 2")
    with pytest.raises(ValueError):
        kvconfig.parse_kv("= 3")


def test_config_text_roundtrip():
    cfg = LdmConfig(dit_depth=3, hidden_size=64, heads=2, sequence_length=4)
    back = kvconfig.from_text(LdmConfig, kvconfig.to_text(cfg))
    assert back == cfg
    vcfg = VaeConfig(frame_px=32, base_channels=16)
    assert kvconfig.from_text(VaeConfig, kvconfig.to_text(vcfg)) == vcfg


def test_config_mapping_roundtrip_json_style():
    mapping = kvconfig.to_mapping(DESK_LDM)
    assert isinstance(mapping["logsnr_max"], float)
    assert kvconfig.from_mapping(LdmConfig, mapping) == DESK_LDM


def test_unknown_config_key_rejected():
    with pytest.raises(ValueError, match="unknown config"):
        kvconfig.from_text(LdmConfig, "dit_depth = 3\nbogus_key = 1\n")


def test_config_invariants():
    with pytest.raises(ValueError):
        LdmConfig(hidden_size=100, heads=3)
    with pytest.raises(ValueError):
        LdmConfig(sequence_length=1)
    with pytest.raises(ValueError):
        LdmConfig(latent_hw=15, patch_size=2)
    with pytest.raises(ValueError):
        VaeConfig(frame_px=30)
    with pytest.raises(ValueError):
        LongtailConfig(p_max=1.5)
    with pytest.raises(ValueError):
        LongtailConfig(capacity=0)


def test_profiles():
    assert profile_ldm("desk") == DESK_LDM
    assert profile_vae("paper") == PAPER_VAE
    with pytest.raises(ValueError):
        profile_ldm("cloud")
    assert PAPER_LDM.dit_depth == 12
    assert PAPER_LDM.hidden_size == 384
    assert PAPER_LDM.heads == 6
    assert PAPER_LDM.patch_size == 2
    assert PAPER_LDM.sequence_length == 36
    assert PAPER_LDM.z_channels == 32
    assert PAPER_LDM.latent_hw == 32
    assert PAPER_LDM.levels == 1000
    assert PAPER_LDM.batch_size == 8
    assert PAPER_LDM.learning_rate == 1e-4
    assert PAPER_LDM.action_embed_dim == 192
    assert PAPER_LDM.k_embed_dim == 192
    assert PAPER_VAE.base_channels == 128
    assert PAPER_VAE.channel_multipliers == (1, 2, 4)
    assert PAPER_VAE.latent_channels == 4
    assert PAPER_VAE.latent_hw == 32
    assert PAPER_VAE.kl_weight == 1e-6
    assert PAPER_VAE.perceptual_weight == 1.0
    assert PAPER_VAE.learning_rate == 4.5e-6
    assert PAPER_VAE.batch_size == 32
    assert PAPER_VAE.resnet_blocks == 2


def test_desk_latent_shape_invariant():
    assert DESK_LDM.latent_hw * (1 << 2) == 64
    vcfg = VaeConfig()
    assert vcfg.latent_hw == vcfg.frame_px >> (len(vcfg.channel_multipliers) - 1)
