"""Deterministic labeled random streams on top of the Philox counter-based generator.

Every random draw in the package comes from a stream named by a tuple of
labels rooted at the run seed, e.g. ``(seed, "rollout", iteration, episode)``.
The label tuple is hashed to a 128-bit Philox key, so streams are independent,
order-free, and reproducible across platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np

_DOMAIN = b"coordigraph.rng/1"


def _encode(parts: tuple) -> bytes:
    chunks = [_DOMAIN]
    for p in parts:
        if isinstance(p, (bool, np.bool_)):
            chunks.append(b"b" + (b"1" if p else b"0"))
        elif isinstance(p, (int, np.integer)):
            chunks.append(b"i" + str(int(p)).encode())
        elif isinstance(p, str):
            chunks.append(b"s" + p.encode())
        else:
            raise TypeError(f"stream labels must be int or str, got {type(p).__name__}")
    return b"\x1f".join(chunks)


def philox_key(*parts) -> int:
    """128-bit key derived from the label tuple by SHA-256."""
    digest = hashlib.sha256(_encode(parts)).digest()
    return int.from_bytes(digest[:16], "little")


def stream(*parts) -> np.random.Generator:
    """Fresh Philox generator for the given label tuple."""
    return np.random.Generator(np.random.Philox(key=philox_key(*parts)))


class StreamKey:
    """A position in the label tree; ``child`` extends it, ``generator`` draws from it."""

    __slots__ = ("parts",)

    def __init__(self, *parts):
        self.parts = tuple(parts)

    def child(self, *more) -> "StreamKey":
        return StreamKey(*self.parts, *more)

    def generator(self) -> np.random.Generator:
        return stream(*self.parts)

    def __repr__(self):
        return f"StreamKey{self.parts!r}"
