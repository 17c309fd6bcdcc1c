"""Named random streams derived from a single master seed.

Every consumer (a sample, an ensemble member, a federated client in a given
round) gets its own generator keyed by a path of names, so results do not
depend on the order in which consumers run.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_part(name: int | str) -> int:
    if isinstance(name, (int, np.integer)):
        if name < 0:
            raise ValueError(f"stream key integers must be non-negative, got {name}")
        return int(name)
    digest = hashlib.sha256(str(name).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def derive(seed: int, *names: int | str) -> np.random.Generator:
    """Return an independent generator for the stream ``seed/names...``.

    >>> a = derive(7, "client", 3, "round", 1).integers(1 << 30)
    >>> b = derive(7, "client", 3, "round", 1).integers(1 << 30)
    >>> a == b
    True
    """
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(n) for n in names))
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(seed: int, *names: int | str) -> int:
    """Integer seed for the stream ``seed/names...`` (for nested configs)."""
    return int(derive(seed, *names).integers(0, 2**31 - 1))
