"""CLI contract: exit codes, artifacts on disk, end-to-end chain."""

from pathlib import Path

import pytest

from tilegen import kvconfig
from tilegen.cli import main
from tilegen.evalkit.harness import load_report
from tilegen.evalkit.vam import VamConfig
from tilegen.worldmodel.config import LdmConfig, VaeConfig


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    """Run collect, balance and all three trainers through the CLI once."""
    root = tmp_path_factory.mktemp("cli_chain")
    data = root / "raw"
    balanced = root / "bal"
    assert main([
        "collect", "--episodes", "6", "--timesteps", "52", "--seed", "9",
        "--level-seed", "3", "--width", "24", "--tile-px", "4",
        "--out", str(data),
    ]) == 0
    assert main([
        "balance", "--in", str(data), "--out", str(balanced),
        "--clusters", "2", "--grid", "4", "--budget", "4", "--seed", "9",
    ]) == 0

    kvconfig.to_file(
        VaeConfig(frame_px=32, base_channels=8,
                  perceptual_weight=0.0, batch_size=4),
        root / "vae.cfg",
    )
    kvconfig.to_file(
        LdmConfig(dit_depth=1, hidden_size=32, heads=2, sequence_length=4,
                  action_embed_dim=16, k_embed_dim=16, z_channels=8,
                  latent_channels=4, latent_hw=8, batch_size=4, ddim_steps=2),
        root / "ldm.cfg",
    )
    kvconfig.to_file(
        VamConfig(frame_px=32, window=8, radius=2, conv_channels=(8, 8, 16),
                  embed_dim=32, depth=1, heads=2, batch_size=4),
        root / "vam.cfg",
    )
    assert main([
        "train-vae", "--data", str(balanced), "--steps", "3",
        "--config", str(root / "vae.cfg"), "--seed", "1",
        "--out", str(root / "vae.ckpt"),
    ]) == 0
    assert main([
        "train-ldm", "--data", str(balanced), "--vae", str(root / "vae.ckpt"),
        "--steps", "3", "--config", str(root / "ldm.cfg"), "--seed", "1",
        "--out", str(root / "ldm.ckpt"),
    ]) == 0
    assert main([
        "train-vam", "--data", str(balanced), "--steps", "3",
        "--config", str(root / "vam.cfg"), "--seed", "1",
        "--out", str(root / "vam.ckpt"),
    ]) == 0
    return root


def test_chain_writes_checkpoints_and_loss_sidecars(chain):
    for stem in ("vae", "ldm", "vam"):
        assert (chain / f"{stem}.ckpt").exists()
        assert (chain / f"{stem}_loss.csv").exists()
        assert (chain / f"{stem}_loss.png").exists()
    csv = (chain / "ldm_loss.csv").read_text().splitlines()
    assert csv[0].startswith("step,loss")
    assert len(csv) == 4


def test_eval_writes_report_csv_and_figures(chain, capsys):
    out = chain / "report" / "report.json"
    code = main([
        "eval", "--model", str(chain / "ldm.ckpt"), "--vae", str(chain / "vae.ckpt"),
        "--vam", str(chain / "vam.ckpt"), "--traj", str(chain / "raw"),
        "--lengths", "1,8,32", "--ddim-steps", "2", "--limit", "3",
        "--seed", "4", "--out", str(out),
    ])
    assert code == 0
    assert out.exists()
    assert out.with_suffix(".csv").exists()
    assert list(out.parent.glob("*.png"))
    report = load_report(out)
    assert report.value(32, "psnr") > 0
    assert 0.0 <= report.value(32, "act_acc") <= 1.0
    stdout = capsys.readouterr().out
    assert "psnr" in stdout and "act_acc" in stdout


def test_pipeline_micro_run_writes_report(tmp_path):
    run = tmp_path / "run"
    code = main([
        "pipeline", "--out", str(run), "--seed", "7", "--width", "24",
        "--episodes", "5", "--timesteps", "52", "--clusters", "2",
        "--budget", "4", "--vae-steps", "2", "--ldm-steps", "2",
        "--vam-steps", "2", "--eval-trajectories", "2",
        "--lengths", "1,8", "--ddim-steps", "2", "--threads", "1",
    ])
    assert code == 0
    assert (run / "report.json").exists()
    assert (run / "report.csv").exists()
    assert (run / "vae.ckpt").exists()
    assert (run / "ldm.ckpt").exists()
    assert (run / "vam.ckpt").exists()
    report = load_report(run / "report.json")
    assert report.trajectories == 2
    assert report.value(8, "psnr") > 0


def test_gen_level_prints_map(capsys):
    assert main(["gen-level", "--seed", "3", "--width", "24"]) == 0
    out = capsys.readouterr().out
    lines = out.strip().splitlines()
    assert any("S" in line for line in lines)
    assert any("#" in line for line in lines)
    assert lines[-1].startswith("seed=3 width=24")


def test_dump_config_round_trips_without_training(capsys):
    from tilegen.worldmodel.config import profile_ldm

    assert main(["train-ldm", "--profile", "desk", "--dump-config"]) == 0
    text = capsys.readouterr().out
    assert kvconfig.from_text(LdmConfig, text) == profile_ldm("desk")


def test_train_without_data_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train-vae", "--steps", "3", "--out", "x.ckpt"])
    assert exc.value.code == 2
    assert "--data" in capsys.readouterr().err


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_balance_rejects_zero_clusters(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["balance", "--in", "x", "--out", "y", "--clusters", "0",
              "--budget", "4"])
    assert exc.value.code == 2
    assert "--clusters" in capsys.readouterr().err


def test_eval_requires_model_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--vae", "v.ckpt", "--traj", "d", "--out", "r.json"])
    assert exc.value.code == 2
    assert "--model" in capsys.readouterr().err


def test_serve_rejects_malformed_bind(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["serve", "--bind", "nonsense"])
    assert exc.value.code == 2
    assert "--bind" in capsys.readouterr().err


def test_missing_checkpoint_is_runtime_error(tmp_path, capsys):
    code = main([
        "eval", "--model", str(tmp_path / "no.ckpt"),
        "--vae", str(tmp_path / "no2.ckpt"), "--traj", str(tmp_path),
        "--out", str(tmp_path / "r.json"),
    ])
    assert code == 1
    assert capsys.readouterr().err.startswith("error:")
