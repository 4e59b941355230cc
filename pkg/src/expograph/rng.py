"""Seeded random streams.

Every random quantity in the package comes from numpy's ``Philox4x64-10``
counter-based bit generator, keyed through :class:`numpy.random.SeedSequence`
with an entropy tuple ``(seed, *path)``.  Streams are therefore addressed by
a path such as ``(seed, "trial", 3)`` instead of being advanced statefully,
which makes results independent of evaluation order and thread count.

Changing the bit generator or the path layout changes every published number,
so both are treated as part of the file formats.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["BIT_GENERATOR", "stream", "MASK64"]

BIT_GENERATOR = "Philox4x64-10"
MASK64 = (1 << 64) - 1


def _word(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"stream path components must be non-negative, got {part}")
    return int(part)


def stream(seed: int, *path: int | str) -> np.random.Generator:
    """Return the generator addressed by ``(seed, *path)``.

    Args:
        seed: Unsigned 64-bit experiment seed.
        *path: Non-negative integers or short string tags naming the sub-stream.

    Returns:
        A fresh :class:`numpy.random.Generator` backed by Philox.
    """
    seed = int(seed) & MASK64
    entropy = [seed & 0xFFFFFFFF, seed >> 32, *(_word(p) for p in path)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
