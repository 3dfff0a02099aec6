import os
import logging
from typing import Iterator, Tuple

import numpy as np

MCVD_THREADS = os.environ.get("MCVD_THREADS")

logger = logging.getLogger(__name__)


def worker_count() -> int:
    """os.cpu_count(), lowered to MCVD_THREADS when that is set."""
    cap = os.cpu_count() or 1
    if MCVD_THREADS:
        try:
            cap = min(cap, max(1, int(MCVD_THREADS)))
        except ValueError:
            logger.warning("ignoring MCVD_THREADS=%r (not an integer)", MCVD_THREADS)
    return cap


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 stream for (seed, key...). Same key -> same stream regardless of caller order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))))


def partition(n_items: int, n_parts: int) -> Iterator[Tuple[int, int]]:
    """Contiguous [start, stop) ranges covering range(n_items)."""
    n_parts = max(1, min(n_parts, n_items))
    bounds = np.linspace(0, n_items, n_parts + 1).astype(int)
    for start, stop in zip(bounds[:-1], bounds[1:]):
        if stop > start:
            yield int(start), int(stop)
