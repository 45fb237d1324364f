"""Seeded, splittable random streams.

Every chain (or worker) owns one :class:`RandomStream`.  Streams with the same
``(seed, stream_id)`` replay identical draw sequences; distinct ids are derived
through :class:`numpy.random.SeedSequence` spawn keys and are independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RandomStream:
    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.stream_id < 0:
            raise ValueError(f"stream_id must be nonnegative, got {self.stream_id}")
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def split(self, stream_id: int) -> "RandomStream":
        """Independent stream sharing this stream's seed."""
        return RandomStream(self.seed, stream_id)

    @property
    def state(self) -> dict:
        return self.generator.bit_generator.state

    @state.setter
    def state(self, value: dict) -> None:
        self.generator.bit_generator.state = value


def as_generator(rng) -> np.random.Generator:
    """Accept a RandomStream, a Generator, or an int seed."""
    if isinstance(rng, RandomStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")
