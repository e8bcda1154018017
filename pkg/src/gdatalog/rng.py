"""Counter-based random streams and the stable hash that keys them.

Every random draw in the package comes from an :class:`RngStream`, which is
a pure function of a 128-bit key: word ``i`` of the stream is the 8-byte
keyed BLAKE2b digest of the little-endian counter ``i``.  Keys are derived
with :func:`stable_hash` from the logical coordinates of a draw (seed,
world, rule instantiation, sampling site), never from evaluation order.

Both constructions are pinned by golden tests; changing either changes
every sampled world.
"""

from __future__ import annotations

import hashlib

_HASH_PERSON = b"gdatalog.sh.v1"
_STREAM_PERSON = b"gdatalog.rs.v1"
_U53 = 1.0 / (1 << 53)

U64_MAX = (1 << 64) - 1


def u64(x: int) -> bytes:
    if not 0 <= x <= U64_MAX:
        raise ValueError(f"{x} does not fit in an unsigned 64-bit word")
    return x.to_bytes(8, "big")


def stable_hash(data: bytes) -> bytes:
    """128-bit digest of ``data`` (BLAKE2b, personalised, 16-byte output)."""
    return hashlib.blake2b(data, digest_size=16, person=_HASH_PERSON).digest()


def _lp(b: bytes) -> bytes:
    return len(b).to_bytes(8, "big") + b


def site_key(seed: int, world: int, head_sig: bytes, site: int) -> bytes:
    """Key for sampling site ``site`` of the rule instantiation ``head_sig``."""
    return stable_hash(b"chase" + u64(seed) + u64(world) + _lp(head_sig) + site.to_bytes(4, "big"))


def cell_key(seed: int, world: int, relation: str, row: int, cell: int) -> bytes:
    """Key for one table cell; ``cell == -1`` addresses the row's existence flag."""
    return stable_hash(
        b"table" + u64(seed) + u64(world) + _lp(relation.encode("utf-8"))
        + u64(row) + cell.to_bytes(8, "big", signed=True)
    )


class RngStream:
    """Deterministic stream of 64-bit words defined by a 16-byte key."""

    __slots__ = ("key", "counter")

    def __init__(self, key: bytes):
        if len(key) != 16:
            raise ValueError("stream keys are exactly 16 bytes")
        self.key = key
        self.counter = 0

    def next_u64(self) -> int:
        i = self.counter
        self.counter = i + 1
        d = hashlib.blake2b(i.to_bytes(8, "little"), digest_size=8, key=self.key,
                            person=_STREAM_PERSON).digest()
        return int.from_bytes(d, "little")

    def uniform(self) -> float:
        """Uniform double strictly inside (0, 1)."""
        return ((self.next_u64() >> 11) + 0.5) * _U53
