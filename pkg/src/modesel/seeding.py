"""Per-purpose seeds fanned out from one root seed.

derive_seed(root, purpose, *extra) hashes (root, purpose code, extra...) through
numpy's SeedSequence, so e.g. the probe's round-7 training seed can be rebuilt
without replaying anything else in the run.
"""

import numpy as np

PURPOSES = {
    "split": 1,
    "init": 2,
    "probe": 3,
    "controller": 4,
    "eval": 5,
    "baseline": 6,
    "stream": 7,
}


def derive_seed(root: int, purpose: str, *extra: int) -> int:
    ss = np.random.SeedSequence([int(root), PURPOSES[purpose], *map(int, extra)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])
