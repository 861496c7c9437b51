"""Counter-based random streams for reproducible parallel Monte Carlo.

Every stream is addressed by (master seed, index path).  Child streams are
derived by appending indices, never by drawing from a parent generator, so
the stream a worker sees depends only on its address and not on scheduling
order or worker count.

Gaussian variates come from ``numpy.random.Generator.standard_normal`` on a
PCG64 bit generator seeded through ``SeedSequence(seed, spawn_key=path)``.
The draw order inside each consumer is fixed and documented there; golden
values are stable within one build.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["StreamKey"]


@dataclass(frozen=True)
class StreamKey:
    """Address of an independent random stream.

    ``seed`` is the experiment master seed; ``path`` is the index tuple
    identifying the consumer (replication, particle, dimension, ...).
    """

    seed: int
    path: tuple[int, ...] = ()

    def child(self, *indices: int) -> "StreamKey":
        """Derive a sub-stream by appending indices to the address."""
        if any(i < 0 for i in indices):
            raise ValueError(f"stream indices must be nonnegative, got {indices}")
        return StreamKey(self.seed, self.path + tuple(int(i) for i in indices))

    def generator(self) -> np.random.Generator:
        """Instantiate the generator at this address (fresh state every call)."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=self.path))

    @classmethod
    def coerce(cls, seed: "int | StreamKey") -> "StreamKey":
        if isinstance(seed, StreamKey):
            return seed
        return cls(int(seed))
