"""Hierarchical seed derivation.

Every random stream in a run is derived from one master seed plus a label
path, e.g. ``derive_seed(master, "sgd", round_index, client_id)``.  Changing
one knob (say, the topology seed) therefore never perturbs unrelated streams.
String labels are hashed with CRC-32, which is stable across platforms and
Python versions.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["seed_sequence", "spawn_rng", "derive_seed"]


def _encode(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    value = int(part)
    if value < 0:
        raise ValueError(f"seed parts must be non-negative, got {value}")
    return value


def seed_sequence(*parts: int | str) -> np.random.SeedSequence:
    """Build a SeedSequence from a label path of ints and strings."""
    if not parts:
        raise ValueError("at least one seed part is required")
    return np.random.SeedSequence([_encode(p) for p in parts])


def spawn_rng(*parts: int | str) -> np.random.Generator:
    """Generator for the stream identified by the label path."""
    return np.random.default_rng(seed_sequence(*parts))


def derive_seed(*parts: int | str) -> int:
    """Collapse a label path to a single integer seed."""
    return int(seed_sequence(*parts).generate_state(1, np.uint64)[0])
