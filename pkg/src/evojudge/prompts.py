"""Versioned prompt templates for every model call."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .backends import payload_block


@lru_cache(maxsize=None)
def template(name: str) -> str:
    return (resources.files(__package__) / "prompts" / f"{name}.txt").read_text(encoding="utf-8")


def render(name: str, payload: dict) -> str:
    """Fill a template with its machine-readable payload block."""
    return template(name).replace("{payload}", payload_block(payload))
