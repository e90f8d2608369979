"""Shared text normalization and digest helpers.

Entity names must compare equal across the parser, the graph merger, the
government-entity filter, and the duplicate scorer, so all of them funnel
through :func:`normalize_name`.
"""

from __future__ import annotations

import hashlib
import re

# C0 control characters other than tab/newline, plus DEL. These are illegal
# in serialized XML 1.0 even when escaped, so they never survive parsing.
_CONTROL = re.compile(r"[\x00-\x08\x0b-\x1f\x7f]")
_WS = re.compile(r"\s+")


def normalize_name(raw: str) -> str:
    """Trim, collapse internal whitespace, uppercase.

    Control characters act as separators rather than being deleted, so that
    garbled output never silently fuses two words into a new name.
    """
    cleaned = _CONTROL.sub(" ", raw)
    return _WS.sub(" ", cleaned).strip().upper()


def sanitize_text(raw: str) -> str:
    """Strip control characters from free text, keeping tabs and newlines."""
    return _CONTROL.sub("", raw)


def text_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
