"""Lenient extraction of JSON objects from model completions."""

from __future__ import annotations

import json
from typing import Any, Optional


def parse_json_object(text: str) -> Optional[dict[str, Any]]:
    """Parse ``text`` as a JSON object, tolerating surrounding chatter.

    Tries a direct parse first, then the outermost ``{...}`` block (models
    routinely wrap JSON in prose or markdown fences).  Returns None when no
    object can be recovered.
    """
    text = (text or "").strip()
    if not text:
        return None
    try:
        obj = json.loads(text)
        if isinstance(obj, dict):
            return obj
    except json.JSONDecodeError:
        pass
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        try:
            obj = json.loads(text[start : end + 1])
            if isinstance(obj, dict):
                return obj
        except json.JSONDecodeError:
            return None
    return None
