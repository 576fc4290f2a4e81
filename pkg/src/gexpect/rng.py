"""Counter-based normal variates addressable by ``(seed, step, path)``.

Each time step gets its own Philox key built from the seed and the step
index; path ``p`` reads the ``p``-th 64-bit word of that stream.  Any block
of paths can therefore be generated independently and in any order, and the
result does not depend on how the paths were chunked.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


def _bitgen(seed: int, step: int) -> np.random.Philox:
    key = ((int(step) & _MASK64) << 64) | (int(seed) & _MASK64)
    return np.random.Philox(key=key)


def uniforms(seed: int, step: int, start: int, count: int) -> np.ndarray:
    """Open-interval uniforms for paths ``start .. start + count - 1``."""
    bg = _bitgen(seed, step)
    # Philox emits four words per counter increment
    block, skip = divmod(int(start), 4)
    if block:
        bg.advance(block)
    raw = bg.random_raw(count + skip)[skip:]
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def normals(seed: int, step: int, start: int, count: int) -> np.ndarray:
    return ndtri(uniforms(seed, step, start, count))
