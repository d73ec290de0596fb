"""Domain-separated seed derivation.

Every random object (graph, hash key, adversary choice) is drawn from a stream
keyed by ``(seed, *context)``. Contexts are tuples of ints and short strings so
that the shared-randomness stream and the adversary stream never overlap.
"""

from __future__ import annotations

import hashlib

import numpy as np

SHARED = "shared"
ADVERSARY = "adversary"


def _encode(parts) -> bytes:
    out = bytearray()
    for p in parts:
        if isinstance(p, bool) or not isinstance(p, (int, str, bytes)):
            raise TypeError(f"unsupported context element {p!r}")
        if isinstance(p, int):
            raw = p.to_bytes(16, "big", signed=True)
            out += b"i" + raw
        else:
            raw = p.encode() if isinstance(p, str) else p
            out += b"s" + len(raw).to_bytes(4, "big") + raw
    return bytes(out)


def derive_seed(seed: int, *context) -> int:
    """128-bit integer derived from ``seed`` and the context tuple."""
    digest = hashlib.blake2b(_encode((seed,) + context), digest_size=16, person=b"asymde-seed").digest()
    return int.from_bytes(digest, "big")


def derive_key(seed: int, *context) -> bytes:
    """32-byte PRF key derived from ``seed`` and the context tuple."""
    return hashlib.blake2b(_encode((seed,) + context), digest_size=32, person=b"asymde-key").digest()


def rng_for(seed: int, *context) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *context)))


def trial_seeds(master: int, trial: int) -> tuple[int, int]:
    """(shared seed, adversary seed) for one trial of an experiment."""
    return derive_seed(master, trial, SHARED) & ((1 << 63) - 1), derive_seed(master, trial, ADVERSARY) & ((1 << 63) - 1)
