"""Deterministic random-number streams for reproducible parallel work."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """Addressable substream of a master seed.

    Streams with distinct ``stream_id`` paths are statistically independent
    (counter-based Philox keyed through ``SeedSequence``), and the same
    ``(master_seed, stream_id)`` always reproduces the same sequence, no
    matter which other streams were consumed before or on which worker.
    Never share one stream between concurrent tasks; give each task its own
    ``child``.
    """

    master_seed: int
    stream_id: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if isinstance(self.stream_id, int):
            object.__setattr__(self, "stream_id", (self.stream_id,))
        else:
            object.__setattr__(self, "stream_id", tuple(self.stream_id))

    def child(self, *ids: int) -> "RngStream":
        """Derive the independent substream addressed by ``ids``."""
        return RngStream(self.master_seed, self.stream_id + tuple(ids))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=self.stream_id
        )
        return np.random.Generator(np.random.Philox(seq))
