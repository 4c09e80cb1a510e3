"""JSON output with every float written at 17 significant digits.

``json.dumps`` writes the shortest round-trip repr, which can drop below the
12 significant digits promised for numeric output; this encoder keeps the
same layout as ``json.dumps(..., indent=2, sort_keys=False)`` but formats
floats with ``%.17g``.
"""

from __future__ import annotations

import json
import math

import numpy as np


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _enc(obj, level: int, indent: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return "null"
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_enc(v, level + 1, indent)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) for v in obj):
            return "[" + ", ".join(_enc(v, level + 1, indent) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _enc(v, level + 1, indent) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _enc(obj, 0, indent) + "\n"
