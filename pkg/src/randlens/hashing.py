"""Stable 64-bit hashing used for seeds, run ids and plan seeds.

Python's built-in ``hash`` is salted per process, so everything that must agree
across machines goes through :func:`stable_hash` instead: BLAKE2b with an
8-byte digest and a fixed personalization string, over a canonical encoding
of the parts.
"""

from __future__ import annotations

import hashlib
import struct
from statistics import NormalDist

_PERSON = b"randlens-v1"
_SEP = b"\x1f"
_STD_NORMAL = NormalDist()

MASK64 = (1 << 64) - 1


def _encode(part: object) -> bytes:
    # Type tags keep "1" and 1 apart.
    if isinstance(part, bool):
        return b"b" + (b"1" if part else b"0")
    if isinstance(part, int):
        return b"i" + str(part).encode()
    if isinstance(part, str):
        return b"s" + part.encode("utf-8")
    if isinstance(part, bytes):
        return b"y" + part
    if part is None:
        return b"n"
    if isinstance(part, (tuple, list)):
        return b"(" + _SEP.join(_encode(p) for p in part) + b")"
    raise TypeError(f"cannot hash {type(part).__name__}")


def stable_hash(*parts: object) -> int:
    """Unsigned 64-bit hash of ``parts`` that is identical on every platform."""
    digest = hashlib.blake2b(
        _SEP.join(_encode(p) for p in parts), digest_size=8, person=_PERSON
    ).digest()
    return struct.unpack("<Q", digest)[0]


def stable_hex(*parts: object) -> str:
    return f"{stable_hash(*parts):016x}"


def unit_uniform(seed: int) -> float:
    """Map a 64-bit seed to a float in the open interval (0, 1)."""
    # 52 bits keep k + 0.5 exact; with 53 the top value rounds to 1.0
    return ((seed >> 12) + 0.5) / float(1 << 52)


def standard_normal(seed: int) -> float:
    """Deterministic N(0, 1) draw keyed by ``seed`` (inverse-CDF transform)."""
    return _STD_NORMAL.inv_cdf(unit_uniform(seed))
