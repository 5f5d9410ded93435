"""Playable neural game engine toolkit."""

__version__ = "0.1.0"
