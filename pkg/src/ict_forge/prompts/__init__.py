"""Canonical prompt texts shipped with the package."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from pathlib import Path


@lru_cache(maxsize=None)
def load_text(name: str) -> str:
    return resources.files(__name__).joinpath(name).read_text(encoding="utf-8")


def load_override(path: str | Path | None, default_name: str) -> str:
    """Text of ``path`` when given, else the shipped asset ``default_name``."""
    if path:
        return Path(path).read_text(encoding="utf-8")
    return load_text(default_name)
