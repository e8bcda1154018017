"""Typed scalar values.

Values are plain Python objects: ``float`` (real), ``int`` (integer),
``str`` (string) and ``bool`` (boolean).  The type of a value is decided by
its Python class, with ``bool`` checked before ``int``.
"""

from __future__ import annotations

import math
import struct

from .errors import TypeMismatch, ValueDomainError

REAL = "real"
INTEGER = "integer"
STRING = "string"
BOOLEAN = "boolean"
TYPES = (REAL, INTEGER, STRING, BOOLEAN)
NUMERIC = frozenset((REAL, INTEGER))

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1


def type_of(value) -> str:
    if isinstance(value, bool):
        return BOOLEAN
    if isinstance(value, int):
        return INTEGER
    if isinstance(value, float):
        return REAL
    if isinstance(value, str):
        return STRING
    raise TypeMismatch(f"unsupported value {value!r} of Python type {type(value).__name__}")


def canonical_real(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueDomainError(f"real values must be finite, got {x!r}")
    # adding +0.0 maps -0.0 to +0.0 and leaves every other float unchanged
    return x + 0.0


def check_int(x: int) -> int:
    if not INT_MIN <= x <= INT_MAX:
        raise ValueDomainError(f"integer {x} outside the signed 64-bit range")
    return x


def coerce(value, typ: str):
    """Validate ``value`` against ``typ`` and return its canonical form.

    Integers are widened to reals; nothing else is converted.
    """
    vt = type_of(value)
    if vt == typ:
        if typ == REAL:
            return canonical_real(value)
        if typ == INTEGER:
            return check_int(value)
        return value
    if typ == REAL and vt == INTEGER:
        return canonical_real(value)
    raise TypeMismatch(f"expected {typ}, got {vt} value {value!r}")


def assignable(src: str, dst: str) -> bool:
    return src == dst or (src == INTEGER and dst == REAL)


def encode(value) -> bytes:
    """Injective, type-tagged byte encoding of a single value."""
    if isinstance(value, bool):
        return b"B\x01" if value else b"B\x00"
    if isinstance(value, int):
        return b"I" + value.to_bytes(8, "big", signed=True)
    if isinstance(value, float):
        return b"R" + struct.pack(">d", value + 0.0)
    if isinstance(value, str):
        raw = value.encode("utf-8")
        return b"S" + len(raw).to_bytes(8, "big") + raw
    raise TypeMismatch(f"cannot encode {value!r}")


def format_value(value) -> str:
    """Render a value as a literal accepted by the program and query lexers."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        if "." not in text:
            mantissa, _, exponent = text.partition("e")
            text = mantissa + ".0" + ("e" + exponent if exponent else "")
        return text
    if isinstance(value, str):
        import json

        return json.dumps(value, ensure_ascii=False)
    raise TypeMismatch(f"cannot format {value!r}")
