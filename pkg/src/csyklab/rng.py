"""Counter-based random streams keyed by (seed, realization, purpose)."""
from __future__ import annotations

import zlib

import numpy as np


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, index: int = 0, purpose: str = "default") -> np.random.Generator:
    """Independent Philox generator for realization ``index`` and a purpose tag.

    Streams for different (seed, index, purpose) triples are statistically
    independent and do not depend on the order in which they are requested.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index), _tag(purpose)])
    return np.random.Generator(np.random.Philox(ss))
