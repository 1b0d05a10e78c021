from __future__ import annotations

import numpy as np

from ..errors import ConfigError

DEFAULT_K = 10  # frames per sequence seen by the model


def thirds(n_frames: int) -> list[range]:
    """Split interior indices 1..n-2 into beginning/middle/end spans, sizes as equal as possible."""
    m = n_frames - 2
    base, extra = divmod(m, 3)
    spans, start = [], 1
    for i in range(3):
        size = base + (1 if i < extra else 0)
        spans.append(range(start, start + size))
        start += size
    return spans


def sample_temporal_subset(n_frames: int, k: int = DEFAULT_K, seed: int | np.random.Generator = 0) -> list[int]:
    """Sorted frame indices spanning the beginning, middle and end of a series.

    The first and last frames are always included.  The other ``k - 2`` picks
    are dealt round-robin to the beginning, middle and end thirds of the
    interior (skipping thirds that are already exhausted) and drawn uniformly
    without replacement inside each third.
    """
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if n_frames < k:
        raise ConfigError(f"need at least k={k} frames, got {n_frames}")
    if n_frames == k:
        return list(range(n_frames))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    spans = thirds(n_frames)
    quota = [0, 0, 0]
    span = 0
    for _ in range(k - 2):
        while quota[span] >= len(spans[span]):
            span = (span + 1) % 3
        quota[span] += 1
        span = (span + 1) % 3
    picks = [0, n_frames - 1]
    for rng_span, q in zip(spans, quota):
        if q:
            picks.extend(int(i) for i in rng.choice(np.asarray(rng_span), size=q, replace=False))
    return sorted(picks)
