"""Episode collection: policies, episode files, dataset assembly."""

from .agents import expert_action, RandomPolicy
from .episodes import EpisodeSample, FormatError, read_episode, write_episode
from .collect import CollectConfig, Dataset, collect_dataset, collect_episode

__all__ = [
    "expert_action",
    "RandomPolicy",
    "EpisodeSample",
    "FormatError",
    "read_episode",
    "write_episode",
    "CollectConfig",
    "Dataset",
    "collect_dataset",
    "collect_episode",
]
