"""Prompt templates shipped as text assets with ``{{ name }}`` placeholders."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_PLACEHOLDER = re.compile(r"\{\{\s*([a-zA-Z_][a-zA-Z0-9_]*)\s*\}\}")


@lru_cache(maxsize=None)
def template(name: str) -> str:
    return resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")


def placeholders(name: str) -> set[str]:
    return set(_PLACEHOLDER.findall(template(name)))


def render(name: str, **values: object) -> str:
    """Substitute every placeholder in template ``name``; a missing value is an error."""
    text = template(name)
    missing = placeholders(name) - set(values)
    if missing:
        raise KeyError(f"template {name!r} missing values for {sorted(missing)}")
    return _PLACEHOLDER.sub(lambda m: str(values[m.group(1)]), text)
