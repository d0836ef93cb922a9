"""Byte-stable JSON serialization for reports and fixtures.

The standard encoder leaves float formatting to ``repr`` and key order
to insertion order; both are stable per interpreter but make no
explicit promise. Reports here must be byte-identical across reruns so
they can be diffed, so keys are always sorted and floats rendered with
17 significant digits, enough to round-trip any double exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ValidationError


def _render(value, indent: int, pad: str) -> str:
    if isinstance(value, str):
        return _escape(value)
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if not np.isfinite(x):
            raise ValidationError("non-finite value has no JSON rendering")
        return format(x, ".17g")
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        inner = pad + "  " * (indent + 1)
        items = [_render(v, indent + 1, pad) for v in value]
        return "[\n" + ",\n".join(inner + s for s in items) + "\n" + pad + "  " * indent + "]"
    if isinstance(value, dict):
        if not value:
            return "{}"
        inner = pad + "  " * (indent + 1)
        parts = []
        for key in sorted(value):
            if not isinstance(key, str):
                raise ValidationError(f"JSON object keys must be strings, got {type(key)}")
            parts.append(inner + _escape(key) + ": " + _render(value[key], indent + 1, pad))
        return "{\n" + ",\n".join(parts) + "\n" + pad + "  " * indent + "}"
    raise ValidationError(f"cannot serialize {type(value)} to JSON")


def _escape(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def dumps(obj) -> str:
    """Render ``obj`` as deterministic, pretty-printed JSON."""
    return _render(obj, 0, "") + "\n"


def dump(obj, path: str | Path) -> None:
    Path(path).write_text(dumps(obj))
