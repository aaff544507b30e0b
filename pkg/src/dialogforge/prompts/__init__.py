"""Prompt templates and rendering.

Templates are plain text files with named ``{placeholder}`` tokens.  The
bundled copies live next to this module; pass ``template_dir`` to load
edited versions from anywhere else.  Rendering substitutes only the named
placeholders, so the JSON-format instructions inside the templates keep
their literal braces.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

TEMPLATE_NAMES = (
    "extraction",
    "abstraction",
    "user_simulator",
    "quality_control",
    "evaluation",
)


def load_template(name: str, template_dir: Optional[str | Path] = None) -> str:
    if name not in TEMPLATE_NAMES:
        raise ValueError(f"unknown template {name!r}")
    if template_dir is not None:
        return (Path(template_dir) / f"{name}.txt").read_text(encoding="utf-8")
    return resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")


def render(template: str, **placeholders: str) -> str:
    """Replace each ``{name}`` given in ``placeholders``; every other brace
    in the template is left untouched."""
    pattern = re.compile(r"\{(" + "|".join(map(re.escape, placeholders)) + r")\}")
    return pattern.sub(lambda m: placeholders[m.group(1)], template)


def render_history(messages: Sequence[dict]) -> str:
    """Flatten a message list using the [USER]/[ASSISTANT] markers the
    simulator template announces."""
    marks = {"user": "[USER]", "assistant": "[ASSISTANT]"}
    return "\n".join(f"{marks[m['role']]} {m['content']}" for m in messages)


def render_strategy_list(texts: Sequence[str]) -> str:
    return "\n".join(f"({i}) {text}" for i, text in enumerate(texts, start=1))


def render_instruction_list(instructions: Sequence[str]) -> str:
    if not instructions:
        return "(none)"
    return "\n".join(f"({i}) {text}" for i, text in enumerate(instructions, start=1))
