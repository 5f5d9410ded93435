from .harness import (
    EvalReport,
    Trajectory,
    evaluate,
    format_report,
    load_report,
    load_trajectories,
    neural_sampler,
    render_report_pngs,
    replay_sampler,
    write_report,
    write_report_csv,
)
from .metrics import PSNR_CAP, act_acc, feature_distance, prob_diff, psnr
from .vam import (
    DESK_VAM,
    PAPER_VAM,
    LoadedVam,
    Vam,
    VamConfig,
    VamTrainResult,
    load_vam,
    profile_vam,
    save_vam,
    train_vam,
    vam_accuracy,
    vam_predict,
    vam_window_probs,
)

__all__ = [
    "DESK_VAM",
    "EvalReport",
    "LoadedVam",
    "PAPER_VAM",
    "PSNR_CAP",
    "Trajectory",
    "Vam",
    "VamConfig",
    "VamTrainResult",
    "act_acc",
    "evaluate",
    "feature_distance",
    "format_report",
    "load_report",
    "load_trajectories",
    "load_vam",
    "neural_sampler",
    "prob_diff",
    "profile_vam",
    "psnr",
    "render_report_pngs",
    "replay_sampler",
    "save_vam",
    "train_vam",
    "vam_accuracy",
    "vam_predict",
    "vam_window_probs",
    "write_report",
    "write_report_csv",
]
