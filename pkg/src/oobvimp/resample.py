"""Seeded bootstrap replicates and an order-independent map/reduce.

Replicate ``b`` gets its own generator seeded with
``mix(master_seed, b)``, where ``mix`` is the SplitMix64 output function
applied to ``master_seed + b * 0x9E3779B97F4A7C15`` (mod 2**64).  The
generator is NumPy's PCG64, whose output stream is fixed across
platforms and NumPy versions, so reports are reproducible anywhere.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .errors import ConfigError, ReplicateTaskError

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

T = TypeVar("T")
R = TypeVar("R")


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer (Steele, Lea & Flood 2014)."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix(seed: int, index: int) -> int:
    """Derive an independent 64-bit seed for stream ``index``."""
    return splitmix64((seed + index * GOLDEN_GAMMA) & MASK64)


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & MASK64))


@dataclass(frozen=True, eq=False)
class BootstrapReplicate:
    index_b: int
    multiplicity: np.ndarray
    oob_rows: np.ndarray
    seed_b: int

    @property
    def inbag_rows(self) -> np.ndarray:
        return np.flatnonzero(self.multiplicity > 0)

    def stream(self, index: int) -> np.random.Generator:
        """Auxiliary generator (e.g. for permutations) tied to this replicate."""
        return generator(mix(self.seed_b, index))


def draw_replicate(n: int, index_b: int, master_seed: int) -> BootstrapReplicate:
    seed_b = mix(master_seed, index_b)
    draws = generator(seed_b).integers(0, n, size=n)
    mult = np.bincount(draws, minlength=n).astype(np.int64)
    mult.flags.writeable = False
    oob = np.flatnonzero(mult == 0)
    oob.flags.writeable = False
    return BootstrapReplicate(index_b, mult, oob, seed_b)


def make_replicates(n: int, B: int, master_seed: int) -> list[BootstrapReplicate]:
    """Replicates ``b = 1..B`` of a size-``n`` bootstrap."""
    if n < 2:
        raise ConfigError(f"bootstrap needs n >= 2, got {n}")
    if B < 1:
        raise ConfigError(f"bootstrap needs B >= 1, got {B}")
    return [draw_replicate(n, b, master_seed) for b in range(1, B + 1)]


def map_reduce(
    replicates: Sequence[BootstrapReplicate],
    task: Callable[[BootstrapReplicate], T],
    reducer: Callable[[list[T]], R],
    jobs: int = 1,
) -> R:
    """Run ``task`` on every replicate and reduce results in ``index_b`` order.

    With ``jobs > 1`` tasks run on a thread pool in arbitrary order; the
    reducer always sees the same index-sorted list, so the aggregate
    matches serial execution exactly.  If any task fails, the error of
    the lowest failing ``index_b`` is raised as ReplicateTaskError.
    """
    ordered = sorted(replicates, key=lambda r: r.index_b)

    def run(rep: BootstrapReplicate):
        try:
            return True, task(rep)
        except Exception as exc:  # noqa: BLE001 - re-raised below with its index
            return False, exc

    if jobs > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run, ordered))
    else:
        outcomes = [run(r) for r in ordered]

    results = []
    for rep, (ok, value) in zip(ordered, outcomes):
        if not ok:
            raise ReplicateTaskError(rep.index_b, value) from value
        results.append(value)
    return reducer(results)


def ordered_map(items: Iterable[T], task: Callable[[T], R], jobs: int = 1) -> list[R]:
    """``[task(x) for x in items]``, optionally on a thread pool."""
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(task, items))
    return [task(x) for x in items]
