"""Splittable, reproducible random streams.

A stream is an immutable ``(seed, path)`` pair.  Each call to
:meth:`RandomStream.generator` builds a fresh PCG64 generator keyed on the
pair, so the same stream always yields the same draws and child streams
obtained with :meth:`RandomStream.split` are statistically independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RandomStream:
    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if any(int(p) < 0 for p in self.path):
            raise ValueError("split indices must be nonnegative")

    def split(self, index: int) -> "RandomStream":
        return RandomStream(self.seed, self.path + (int(index),))

    def spawn(self, count: int) -> list["RandomStream"]:
        return [self.split(i) for i in range(count)]

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=tuple(int(p) for p in self.path))
        return np.random.Generator(np.random.PCG64(seq))

    def __str__(self):
        return f"{self.seed}:{'/'.join(map(str, self.path)) or '-'}"


def as_generator(stream) -> np.random.Generator:
    """Accept a RandomStream or an already-running numpy Generator."""
    if isinstance(stream, RandomStream):
        return stream.generator()
    if isinstance(stream, np.random.Generator):
        return stream
    raise TypeError(f"expected RandomStream or numpy Generator, got {type(stream).__name__}")
