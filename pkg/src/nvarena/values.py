"""Closed value model and its canonical text encoding.

Stimulus inputs and observed responses are plain Python objects drawn from a
closed set (int, float, string, bool, list, map, null) plus three sentinels
for failed rows. Every value has exactly one canonical text encoding, which
is what all behavioral comparison works on: two observations are "the same
behavior" iff their canonical encodings are byte-identical.
"""

from __future__ import annotations

import enum
import json
import math

from .errors import UnsupportedTypeError

TYPE_TAGS = ("int", "float", "string", "bool", "list", "map", "null")


class Sentinel(enum.Enum):
    """Stands in for a row output that was never produced."""

    ERROR = "#ERROR"
    TIMEOUT = "#TIMEOUT"
    CRASH = "#CRASH"

    def __repr__(self):
        return self.value

    def __str__(self):
        return self.value


SENTINEL_BY_TOKEN = {s.value: s for s in Sentinel}

SENTINEL_FOR_STATUS = {
    "error": Sentinel.ERROR,
    "timeout": Sentinel.TIMEOUT,
    "crash": Sentinel.CRASH,
}


def to_value(obj):
    """Coerce a Python object into the closed value model.

    Tuples become lists (JSON semantics). Raises UnsupportedTypeError for
    anything else outside the model: sets, bytes, non-string map keys,
    non-finite floats, arbitrary objects, or sentinels nested in composites.
    """
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise UnsupportedTypeError(f"non-finite float {obj!r} is not encodable")
        return obj
    if isinstance(obj, (list, tuple)):
        return [to_value(x) for x in obj]
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            if not isinstance(k, str):
                raise UnsupportedTypeError(f"map key {k!r} is not a string")
            out[k] = to_value(v)
        return out
    raise UnsupportedTypeError(f"value of type {type(obj).__name__} is outside the closed type set")


def canonical_encode(value) -> str:
    """Deterministic, injective text form of a value.

    Sentinels use their bare tokens (which no JSON encoding can collide
    with); everything else is compact JSON with sorted map keys. Floats use
    Python's shortest round-trip repr, so e.g. 0.1 + 0.2 encodes as
    "0.30000000000000004" and 1.0 stays distinct from 1.
    """
    if isinstance(value, Sentinel):
        return value.value
    return json.dumps(to_value(value), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)


def canonical_decode(text: str):
    """Inverse of canonical_encode (used when loading persisted matrices)."""
    if text in SENTINEL_BY_TOKEN:
        return SENTINEL_BY_TOKEN[text]
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UnsupportedTypeError(f"not a canonical value encoding: {text!r}") from exc


def is_sentinel(value) -> bool:
    return isinstance(value, Sentinel)


def type_tag_of(value) -> str:
    """Semantic type tag of a non-sentinel value."""
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "list"
    if isinstance(value, dict):
        return "map"
    raise UnsupportedTypeError(f"value of type {type(value).__name__} has no tag")
