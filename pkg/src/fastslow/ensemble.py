"""Ensembles of simulated group elements and the block runner that produces them."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lie import GroupElement, GroupSpec
from .observables import Observable
from .rng import block_streams

DEFAULT_BLOCK = 4096


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Uniformly weighted sample of group elements with seed provenance."""

    spec: GroupSpec
    states: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.states)
        if s.ndim != 3 or len(s) == 0:
            raise ValueError("an ensemble needs a nonempty stack of matrices")
        if s.shape[1:] != (self.spec.n, self.spec.n):
            raise ValueError("states do not match the group dimension")
        object.__setattr__(self, "states", s)

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, i: int) -> GroupElement:
        return GroupElement(self.spec, self.states[i])

    def mean(self, f: Observable) -> tuple[float, float]:
        """Sample mean of ``f`` and its standard error."""
        v = f(self.states)
        se = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        return float(np.mean(v)), se

    def subset(self, idx) -> "Ensemble":
        return Ensemble(self.spec, self.states[idx], dict(self.provenance))


def run_blocks(fn, master_seed: int, n_paths: int, block_size: int = DEFAULT_BLOCK,
               workers: int = 1, first_stream: int = 0) -> list:
    """Run ``fn(rng, start, stop)`` on every path block, in block order.

    Blocks and their streams depend only on ``n_paths`` and ``block_size``,
    so results are identical for any ``workers``.
    """
    blocks = block_streams(master_seed, n_paths, block_size, first_stream)
    if workers <= 1 or len(blocks) == 1:
        return [fn(rng, lo, hi) for rng, lo, hi in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, rng, lo, hi) for rng, lo, hi in blocks]
        return [f.result() for f in futures]
