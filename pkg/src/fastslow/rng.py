"""Counter-based random streams keyed by ``(master_seed, stream_id)``.

Each stream is a Philox generator whose 128-bit key is the pair
``(master_seed, stream_id)``, so any two distinct pairs give independent
sequences and the same pair always replays the same numbers, no matter how
many workers are in play.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class RngStream:
    """A reproducible random stream.

    Parameters
    ----------
    master_seed : int
        Experiment-wide seed (reduced mod 2**64).
    stream_id : int
        Index of the stream, typically a path or path-block index.
    """

    def __init__(self, master_seed: int, stream_id: int = 0):
        self.master_seed = int(master_seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self.generator = np.random.Generator(self._bitgen)

    @property
    def counter(self) -> int:
        """Position of the underlying Philox counter (number of 256-bit blocks used)."""
        ctr = self._bitgen.state["state"]["counter"]
        return int(sum(int(c) << (64 * i) for i, c in enumerate(ctr)))

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self.generator.random(size)

    def integers(self, high: int, size=None) -> np.ndarray:
        return self.generator.integers(0, high, size=size)

    def substream(self, offset: int) -> "RngStream":
        """Independent stream ``(master_seed, stream_id + offset)``."""
        return RngStream(self.master_seed, self.stream_id + offset)

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"


def block_streams(master_seed: int, n_paths: int, block_size: int, first_stream: int = 0):
    """Split ``n_paths`` into fixed-size blocks, one stream per block.

    Returns a list of ``(stream, start, stop)`` triples. The decomposition
    depends only on ``n_paths`` and ``block_size``, never on worker count.
    """
    blocks = []
    for b, start in enumerate(range(0, n_paths, block_size)):
        stop = min(start + block_size, n_paths)
        blocks.append((RngStream(master_seed, first_stream + b), start, stop))
    return blocks
