"""Single entry point exposing the pipeline as subcommands.

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

# Indexed by Tile value: Empty Solid Pipe Coin PowerUp Hazard Goal.
_TILE_CHARS = ".#|o?^G"

_MIX_P_RANDOM = {"random+expert": 0.5, "random": 1.0, "expert": 0.0}


def _positive_int(raw: str) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {raw!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {raw}")
    return value


def _lengths_list(raw: str) -> list[int]:
    try:
        values = [int(p) for p in raw.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {raw!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("lengths must be positive integers")
    return values


def _bind_addr(raw: str) -> tuple[str, int]:
    host, sep, port = raw.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {raw!r}")
    return host or "127.0.0.1", int(port)


def _loss_sidecars(ckpt_path: str | Path, rows: list[dict], title: str) -> None:
    from .worldmodel.training import plot_loss_png, write_loss_csv

    base = Path(ckpt_path)
    write_loss_csv(base.with_name(base.stem + "_loss.csv"), rows)
    plot_loss_png(base.with_name(base.stem + "_loss.png"), rows, title)


def _cmd_gen_level(args) -> int:
    from .tilequest.tiles import gen_level

    m = gen_level(args.seed, args.width)
    rows = [
        "".join(_TILE_CHARS[m.tiles[y * m.width + x]] for x in range(m.width))
        for y in range(m.height)
    ]
    sx, sy = m.spawn_default
    rows[sy] = rows[sy][:sx] + "S" + rows[sy][sx + 1:]
    text = "\n".join(rows)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text)
    print(f"seed={args.seed} width={m.width} height={m.height} spawn={sx},{sy}")
    return 0


def _cmd_collect(args) -> int:
    from .datagen.collect import CollectConfig, collect_dataset

    p_random = args.p_random if args.p_random is not None else _MIX_P_RANDOM[args.mix]
    cfg = CollectConfig(
        episodes=args.episodes,
        timesteps=args.timesteps,
        seed=args.seed,
        level_seed=args.level_seed,
        width=args.width,
        p_random=p_random,
        preferred_weight=args.preferred_weight,
        tile_px=args.tile_px,
        repeat_max=args.repeat_max,
    )
    ds = collect_dataset(args.out, cfg, progress=True)
    print(f"collected {ds.episodes} episodes x {ds.timesteps} steps -> {args.out}")
    return 0


def _cmd_balance(args) -> int:
    from .balance.select import sample_balanced
    from .datagen.collect import Dataset

    raw = Dataset(args.in_dir)
    result = sample_balanced(
        raw, args.out, clusters=args.clusters, grid=args.grid,
        budget=args.budget, seed=args.seed,
    )
    print(
        f"selected {len(result.selected)}/{args.budget} episodes across "
        f"{result.k} clusters (nnls residual {result.residual:.6f}) -> {args.out}"
    )
    return 0


def _vae_config(args):
    from . import kvconfig
    from .worldmodel.config import VaeConfig, profile_vae

    if args.config:
        return kvconfig.from_file(VaeConfig, args.config)
    return profile_vae(args.profile)


def _dump_config(cfg) -> int:
    from . import kvconfig

    print(kvconfig.to_text(cfg), end="")
    return 0


def _require(args, **flags) -> None:
    missing = [name for name, value in flags.items() if value is None]
    if missing:
        args._parser.error(
            "the following arguments are required: "
            + ", ".join(f"--{name}" for name in missing)
        )


def _cmd_train_vae(args) -> int:
    from .datagen.collect import Dataset
    from .worldmodel.training import train_vae

    cfg = _vae_config(args)
    if args.dump_config:
        return _dump_config(cfg)
    _require(args, data=args.data, steps=args.steps, out=args.out)
    ds = Dataset(args.data)
    result = train_vae(ds, cfg, args.steps, args.seed, out=args.out)
    _loss_sidecars(args.out, result.losses, "vae training loss")
    print(
        f"trained vae {args.steps} steps -> {args.out} "
        f"(final loss {result.losses[-1]['loss']:.4f})"
    )
    return 0


def _cmd_train_ldm(args) -> int:
    from . import kvconfig
    from .datagen.collect import Dataset
    from .worldmodel.config import LdmConfig, LongtailConfig, profile_ldm
    from .worldmodel.dit import load_ldm
    from .worldmodel.training import train_ldm
    from .worldmodel.vae import load_vae

    resume = load_ldm(args.resume) if args.resume else None
    if resume is not None:
        cfg = resume.cfg
    elif args.config:
        cfg = kvconfig.from_file(LdmConfig, args.config)
    else:
        cfg = profile_ldm(args.profile)
    if args.dump_config:
        return _dump_config(cfg)
    _require(args, data=args.data, vae=args.vae, steps=args.steps, out=args.out)
    longtail = LongtailConfig(enabled=not args.no_longtail)
    vae = load_vae(args.vae)
    ds = Dataset(args.data)
    result = train_ldm(
        ds, vae.model, cfg, longtail, args.steps, args.seed,
        out=args.out, resume=resume, checkpoint_every=args.checkpoint_every,
    )
    if result.losses:
        _loss_sidecars(args.out, result.losses, "ldm training loss")
        final = result.losses[-1]["loss"]
    else:
        final = float("nan")
    print(
        f"trained ldm {args.steps} steps -> {args.out} "
        f"(final loss {final:.4f}, latent scale {result.latent_scale:.4f})"
    )
    return 0


def _cmd_train_vam(args) -> int:
    from . import kvconfig
    from .datagen.collect import Dataset
    from .evalkit.vam import VamConfig, profile_vam, train_vam

    if args.config:
        cfg = kvconfig.from_file(VamConfig, args.config)
    else:
        cfg = profile_vam(args.profile)
    if args.dump_config:
        return _dump_config(cfg)
    _require(args, data=args.data, steps=args.steps, out=args.out)
    ds = Dataset(args.data)
    result = train_vam(
        ds, cfg, args.steps, args.seed, out=args.out,
        holdout_fraction=args.holdout_fraction,
    )
    _loss_sidecars(args.out, result.losses, "vam training loss")
    print(
        f"trained vam {args.steps} steps -> {args.out} "
        f"(holdout accuracy {result.holdout_accuracy:.3f})"
    )
    return 0


def _run_eval(model_path, vae_path, vam_path, traj_dir, lengths, ddim_steps,
              seed, limit, out_path) -> None:
    from .datagen.collect import Dataset
    from .evalkit.harness import (
        evaluate,
        format_report,
        load_trajectories,
        neural_sampler,
        render_report_pngs,
        write_report,
        write_report_csv,
    )
    from .evalkit.vam import load_vam
    from .worldmodel.dit import load_ldm
    from .worldmodel.schedule import NoiseSchedule
    from .worldmodel.vae import load_vae

    ldm = load_ldm(model_path)
    vae = load_vae(vae_path)
    vam = load_vam(vam_path) if vam_path else None
    scale = float(ldm.extra.get("latent_scale", 1.0))
    schedule = NoiseSchedule(ldm.cfg.levels, ldm.cfg.logsnr_max, ldm.cfg.logsnr_min)
    sampler = neural_sampler(ldm.model, vae.model, schedule, ddim_steps, scale, seed)
    trajectories = load_trajectories(Dataset(traj_dir), limit=limit)
    report = evaluate(
        sampler,
        vam.model if vam else None,
        trajectories,
        lengths,
        vae=vae.model,
        ddim_steps=ddim_steps,
        model_id=str(model_path),
        vam_id=str(vam_path or ""),
    )
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(report, out)
    write_report_csv(report, out.with_suffix(".csv"))
    pngs = render_report_pngs(report, out.parent)
    print(format_report(report))
    print(f"wrote {out}, {out.with_suffix('.csv')} and {len(pngs)} figures")


def _cmd_eval(args) -> int:
    _run_eval(
        args.model, args.vae, args.vam, args.traj, args.lengths,
        args.ddim_steps, args.seed, args.limit, args.out,
    )
    return 0


def _cmd_serve(args) -> int:
    from pathlib import Path

    from .server import build_state, serve

    host, port = args.bind
    if args.static is not None and not Path(args.static).is_dir():
        raise FileNotFoundError(f"static directory {args.static} does not exist")
    state = build_state(
        model_path=args.model,
        vae_path=args.vae,
        level_seed=args.level_seed,
        level_width=args.level_width,
    )
    modes = "engine+neural" if args.model else "engine"
    print(f"serving {modes} on ws://{host}:{port}/ws")
    if args.static is not None:
        print(f"serving client from {args.static} on http://{host}:{port}/")
    serve(state, host, port, static_dir=args.static)
    return 0


def _cmd_pipeline(args) -> int:
    from .rng import mix
    from .balance.select import sample_balanced
    from .datagen.collect import CollectConfig, Dataset, collect_dataset
    from .evalkit.vam import profile_vam, train_vam
    from .worldmodel.config import LongtailConfig, profile_ldm, profile_vae
    from .worldmodel.dit import load_ldm
    from .worldmodel.training import train_ldm, train_vae
    from .worldmodel.vae import load_vae

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raw_dir = out / "raw"
    balanced_dir = out / "balanced"
    eval_dir = out / "holdout"
    vae_ckpt = out / "vae.ckpt"
    ldm_ckpt = out / "ldm.ckpt"
    vam_ckpt = out / "vam.ckpt"
    report_path = out / "report.json"

    print(f"[1/6] collect {args.episodes} episodes -> {raw_dir}")
    cfg = CollectConfig(
        episodes=args.episodes, timesteps=args.timesteps, seed=args.seed,
        level_seed=args.level_seed, width=args.width,
    )
    raw = collect_dataset(raw_dir, cfg, progress=True)

    print(f"[2/6] balance to {args.budget} episodes -> {balanced_dir}")
    if args.resume and (balanced_dir / "manifest.json").exists():
        balanced = Dataset(balanced_dir)
        print(f"kept existing balanced set ({balanced.episodes} episodes)")
    else:
        result = sample_balanced(
            raw, balanced_dir, clusters=args.clusters, grid=args.grid,
            budget=args.budget, seed=args.seed,
        )
        balanced = Dataset(balanced_dir)
        print(f"selected {len(result.selected)} episodes (residual {result.residual:.6f})")

    print(f"[3/6] train vae {args.vae_steps} steps -> {vae_ckpt}")
    if args.resume and vae_ckpt.exists():
        vae = load_vae(vae_ckpt).model
        print("kept existing vae checkpoint")
    else:
        vae_result = train_vae(
            balanced, profile_vae(args.profile), args.vae_steps, args.seed,
            out=vae_ckpt,
        )
        _loss_sidecars(vae_ckpt, vae_result.losses, "vae training loss")
        vae = vae_result.model

    print(f"[4/6] train ldm {args.ldm_steps} steps -> {ldm_ckpt}")
    longtail = LongtailConfig(enabled=not args.no_longtail)
    resume = None
    if args.resume and ldm_ckpt.exists():
        resume = load_ldm(ldm_ckpt)
        print(f"resuming ldm from step {resume.step}")
    if resume is not None and resume.step >= args.ldm_steps:
        print("kept existing ldm checkpoint")
    else:
        cfg_ldm = resume.cfg if resume is not None else profile_ldm(args.profile)
        ldm_result = train_ldm(
            balanced, vae, cfg_ldm, longtail, args.ldm_steps, args.seed,
            out=ldm_ckpt, resume=resume, checkpoint_every=args.checkpoint_every,
        )
        if ldm_result.losses:
            _loss_sidecars(ldm_ckpt, ldm_result.losses, "ldm training loss")

    print(f"[5/6] train vam {args.vam_steps} steps -> {vam_ckpt}")
    if args.resume and vam_ckpt.exists():
        print("kept existing vam checkpoint")
    else:
        vam_result = train_vam(
            balanced, profile_vam(args.profile), args.vam_steps, args.seed,
            out=vam_ckpt,
        )
        _loss_sidecars(vam_ckpt, vam_result.losses, "vam training loss")
        print(f"vam holdout accuracy {vam_result.holdout_accuracy:.3f}")

    eval_timesteps = max(args.lengths) + 17
    print(f"[6/6] eval {args.eval_trajectories} held-out trajectories -> {report_path}")
    eval_cfg = CollectConfig(
        episodes=args.eval_trajectories, timesteps=eval_timesteps,
        seed=mix(args.seed, 0xE7A1), level_seed=args.level_seed, width=args.width,
    )
    collect_dataset(eval_dir, eval_cfg, progress=True)
    if args.resume and report_path.exists():
        print("kept existing report")
        return 0
    _run_eval(
        ldm_ckpt, vae_ckpt, vam_ckpt, eval_dir, args.lengths,
        args.ddim_steps, args.seed, None, report_path,
    )
    return 0


def _add_common(sub, *, seed_default=0):
    sub.add_argument("--seed", type=int, default=seed_default, help="base random seed")
    sub.add_argument("--threads", type=_positive_int, default=None,
                     help="cap torch CPU threads (1 for strict determinism)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tilegen",
        description="Tile platformer data, world model training and play server.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-level", help="print a generated level as text")
    p.add_argument("--width", type=_positive_int, default=32)
    p.add_argument("--out", default=None, help="write the map to a file instead")
    _add_common(p)
    p.set_defaults(func=_cmd_gen_level)

    p = subs.add_parser("collect", help="record gameplay episodes to a dataset")
    p.add_argument("--episodes", type=_positive_int, required=True)
    p.add_argument("--timesteps", type=_positive_int, default=200)
    p.add_argument("--level-seed", type=int, default=3)
    p.add_argument("--width", type=_positive_int, default=32)
    p.add_argument("--tile-px", type=_positive_int, default=8)
    p.add_argument("--repeat-max", type=_positive_int, default=4,
                   help="random policy holds an action up to this many ticks")
    p.add_argument("--mix", choices=sorted(_MIX_P_RANDOM), default="random+expert")
    p.add_argument("--p-random", type=float, default=None,
                   help="override the per-step random policy probability")
    p.add_argument("--preferred-weight", type=float, default=1.0)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_collect)

    p = subs.add_parser("balance", help="select a balanced episode subset")
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR")
    p.add_argument("--out", required=True)
    p.add_argument("--clusters", type=_positive_int, default=64)
    p.add_argument("--grid", type=_positive_int, default=8)
    p.add_argument("--budget", type=_positive_int, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_balance)

    p = subs.add_parser("train-vae", help="train the frame autoencoder")
    p.add_argument("--data")
    p.add_argument("--steps", type=_positive_int)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--dump-config", action="store_true",
                   help="print the resolved config as key=value text and exit")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=_cmd_train_vae, _parser=p)

    p = subs.add_parser("train-ldm", help="train the latent diffusion world model")
    p.add_argument("--data")
    p.add_argument("--vae")
    p.add_argument("--steps", type=_positive_int)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--dump-config", action="store_true",
                   help="print the resolved config as key=value text and exit")
    p.add_argument("--no-longtail", action="store_true",
                   help="disable the long-tail replay queue")
    p.add_argument("--checkpoint-every", type=_positive_int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=_cmd_train_ldm, _parser=p)

    p = subs.add_parser("train-vam", help="train the action prediction model")
    p.add_argument("--data")
    p.add_argument("--steps", type=_positive_int)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--dump-config", action="store_true",
                   help="print the resolved config as key=value text and exit")
    p.add_argument("--holdout-fraction", type=float, default=0.1)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=_cmd_train_vam, _parser=p)

    p = subs.add_parser("eval", help="score rollouts against held-out trajectories")
    p.add_argument("--model", required=True, help="ldm checkpoint")
    p.add_argument("--vae", required=True, help="vae checkpoint")
    p.add_argument("--vam", default=None, help="action model checkpoint")
    p.add_argument("--traj", required=True, help="trajectory dataset directory")
    p.add_argument("--lengths", type=_lengths_list, default=[1, 16, 32, 64, 128, 256])
    p.add_argument("--ddim-steps", type=_positive_int, default=8)
    p.add_argument("--limit", type=_positive_int, default=None,
                   help="evaluate at most this many trajectories")
    p.add_argument("--out", required=True, help="report file (JSON)")
    _add_common(p)
    p.set_defaults(func=_cmd_eval)

    p = subs.add_parser("serve", help="run the realtime play server")
    p.add_argument("--bind", type=_bind_addr, default=("127.0.0.1", 8765),
                   metavar="HOST:PORT")
    p.add_argument("--model", default=None, help="ldm checkpoint for neural mode")
    p.add_argument("--vae", default=None, help="vae checkpoint for neural mode")
    p.add_argument("--level-seed", type=int, default=3)
    p.add_argument("--level-width", type=_positive_int, default=32)
    p.add_argument("--static", default=None, metavar="DIR",
                   help="serve a built browser client from this directory")
    _add_common(p)
    p.set_defaults(func=_cmd_serve)

    p = subs.add_parser("pipeline", help="collect, balance, train and eval end to end")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=_positive_int, default=4000)
    p.add_argument("--timesteps", type=_positive_int, default=200)
    p.add_argument("--level-seed", type=int, default=3)
    p.add_argument("--width", type=_positive_int, default=32)
    p.add_argument("--clusters", type=_positive_int, default=64)
    p.add_argument("--grid", type=_positive_int, default=8)
    p.add_argument("--budget", type=_positive_int, default=400)
    p.add_argument("--vae-steps", type=_positive_int, default=7000)
    p.add_argument("--ldm-steps", type=_positive_int, default=5200)
    p.add_argument("--vam-steps", type=_positive_int, default=2800)
    p.add_argument("--no-longtail", action="store_true")
    p.add_argument("--checkpoint-every", type=_positive_int, default=500)
    p.add_argument("--eval-trajectories", type=_positive_int, default=60)
    p.add_argument("--lengths", type=_lengths_list, default=[1, 16, 32, 64, 128, 256])
    p.add_argument("--ddim-steps", type=_positive_int, default=8)
    p.add_argument("--resume", action="store_true",
                   help="reuse finished stage outputs found in --out")
    _add_common(p, seed_default=42)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        import torch

        torch.set_num_threads(args.threads)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - map any runtime failure to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
