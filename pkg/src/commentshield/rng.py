"""Named-stream seed derivation.

All randomness in the pipeline flows from one root seed. Each consumer
derives its own stream from (root, *names), so adding or reordering one
consumer never perturbs the draws seen by another.
"""

import hashlib
import random

import numpy as np


def derive_seed(root: int, *names: object) -> int:
    """Derive a 63-bit stream seed from a root seed and a name path."""
    tag = "\x1f".join([str(int(root))] + [str(n) for n in names])
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFFFFFFFFFF


def derive_rng(root: int, *names: object) -> random.Random:
    """A stdlib Random seeded from the named stream."""
    return random.Random(derive_seed(root, *names))


def derive_np_rng(root: int, *names: object) -> np.random.Generator:
    """A numpy Generator seeded from the named stream."""
    return np.random.default_rng(derive_seed(root, *names))
