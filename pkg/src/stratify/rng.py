"""Deterministic random-stream derivation.

All randomness in the package flows from one master seed. Sub-streams are
derived from a path of labels (strings hashed with crc32, ints taken as-is),
so e.g. the SMOTE stream for pattern 1 is ``derive_rng(seed, "smote", 1)``.
``SeedSequence`` plus PCG64 makes every stream reproducible across platforms
and independent of execution order.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["derive_rng", "derive_seed"]


def _tokens(path):
    out = []
    for part in path:
        if isinstance(part, str):
            out.append(zlib.crc32(part.encode("utf-8")))
        elif isinstance(part, (int, np.integer)):
            out.append(int(part) & 0xFFFFFFFF)
        else:
            raise TypeError(f"stream path entries must be str or int, got {type(part)!r}")
    return out


def derive_rng(master_seed: int, *path) -> np.random.Generator:
    """Generator for the sub-stream identified by `path` under `master_seed`."""
    seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, *_tokens(path)])
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(master_seed: int, *path) -> int:
    """Plain integer seed for the sub-stream (for APIs that take a seed, not a Generator)."""
    seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, *_tokens(path)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])
