import zlib
from typing import Union

import numpy as np

Label = Union[str, int]

MAX_SEED = 2**64 - 1


def _label_key(label: Label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    return zlib.crc32(str(label).encode("utf-8"))


def seed_sequence(seed: int, *labels: Label) -> np.random.SeedSequence:
    """
    Build the seed sequence of a named random stream.
    Args:
        seed (int): Root 64-bit seed.
        *labels (str | int): Stream path, e.g. ("sample", "A").
    Returns:
        np.random.SeedSequence: Sequence whose spawn key encodes the labels.
    """
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_label_key(l) for l in labels))


def rng_for(seed: int, *labels: Label) -> np.random.Generator:
    """
    Counter-based generator for the stream named by labels.
    Args:
        seed (int): Root 64-bit seed.
        *labels (str | int): Stream path.
    Returns:
        np.random.Generator: Philox-backed generator, identical for identical (seed, labels).
    """
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *labels)))


def derive_seed(seed: int, *labels: Label) -> int:
    """
    Derive a child 64-bit seed for a named sub-task.
    Args:
        seed (int): Root 64-bit seed.
        *labels (str | int): Sub-task path.
    Returns:
        int: Child seed in [0, 2**64).
    """
    lo, hi = seed_sequence(seed, *labels).generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)
