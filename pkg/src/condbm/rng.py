"""Reproducible, independent random streams.

A stream is addressed by ``(seed, index)``.  The seed is hashed once into a
128-bit Philox key; the stream index occupies the top word of the 256-bit
Philox counter, so distinct indices read disjoint blocks of one counter-based
sequence and no state has to be shared between workers.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_MASK64 = (1 << 64) - 1


@lru_cache(maxsize=64)
def _philox_key(seed: int) -> tuple[int, int]:
    state = np.random.SeedSequence(seed & _MASK64).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


@dataclass(frozen=True)
class RngStream:
    seed: int
    index: int = 0

    def __post_init__(self):
        for name in ("seed", "index"):
            v = getattr(self, name)
            if not 0 <= int(v) <= _MASK64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array(_philox_key(int(self.seed)), dtype=np.uint64)
        counter = np.array([0, 0, 0, int(self.index)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def spawn(self, offset: int) -> "RngStream":
        return RngStream(self.seed, (self.index + offset) & _MASK64)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


def stream_label(rng) -> tuple[int | None, int | None]:
    if isinstance(rng, RngStream):
        return rng.seed, rng.index
    return None, None
