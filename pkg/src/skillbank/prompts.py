"""Prompt templates shipped as editable text files under ``data/prompts``."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def template(name: str) -> str:
    return resources.files("skillbank").joinpath(f"data/prompts/{name}.txt").read_text(encoding="utf-8")


def render(name: str, **fields) -> str:
    return template(name).format(**fields)


def extractor_templates(count: int = 3) -> list[str]:
    return [template(f"extractor_{i}") for i in range(1, count + 1)]
