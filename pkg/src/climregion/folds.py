"""Deterministic seeding and k-fold partitions shared by clustering and regression."""
from __future__ import annotations

import numpy as np

from .errors import TooFewSamples


def derive_seed(seed: int, *index: int) -> int:
    """Child seed for restart/fold/region ``index`` of master ``seed``.

    Derivation depends only on the arguments, so work split across threads
    reproduces the sequential result exactly.
    """
    ss = np.random.SeedSequence([int(seed), *(int(i) for i in index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def make_folds(n: int, folds: int = 10, seed: int = 0) -> list[np.ndarray]:
    """Shuffle ``range(n)`` and split into ``folds`` near-equal index sets.

    The first ``n % folds`` folds get one extra element.  Each returned
    array is sorted.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise TooFewSamples(f"{n} samples cannot fill {folds} folds")
    perm = np.random.default_rng(derive_seed(seed, 0)).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]
