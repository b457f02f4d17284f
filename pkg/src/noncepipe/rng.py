"""Named random substreams derived from a single master seed.

Every component that needs randomness asks for a substream by name. Streams
are independent of each other and of registration order, so adding a new
scenario or module never perturbs the values an existing one draws.
"""

from __future__ import annotations

import hashlib
import random

__all__ = ["derive_seed", "substream"]

_SEP = b"\x1f"


def derive_seed(master_seed: int, *names: object) -> int:
    """Collapse a master seed plus a name path into a 128-bit stream seed."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode("ascii"))
    for name in names:
        h.update(_SEP)
        h.update(str(name).encode("utf-8"))
    return int.from_bytes(h.digest()[:16], "big")


def substream(master_seed: int, *names: object) -> random.Random:
    """Return an independent, reproducible RNG for the given name path."""
    return random.Random(derive_seed(master_seed, *names))
