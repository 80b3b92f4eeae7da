"""Seeded random streams.

One `RngStream` per chain block. Streams are children of the same
`SeedSequence` root, so distinct ids give independent sequences and a
repeated (seed, stream_id) reproduces the same draws bit for bit.
"""
from typing import Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

RngLike = Union["RngStream", np.random.Generator, int, None]


class RngStream(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=2**64)
    stream_id: int = Field(default=0, ge=0)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(seq)

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(seed=self.seed, stream_id=stream_id)


def as_generator(rng: RngLike) -> np.random.Generator:
    """Accept an RngStream, a Generator or a bare seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)
