"""Deterministic derivation of independent random streams from one master seed.

Every component (fleet sampling, channel dynamics, network init, exploration
noise, replay sampling, ...) gets its own stream keyed by string labels, so a
single run seed reproduces each component independently. Labels are hashed
with crc32, which is stable across platforms and Python versions.
"""

from __future__ import annotations

import zlib

import numpy as np


def _spawn_key(labels):
    return tuple(zlib.crc32(str(label).encode("utf-8")) for label in labels)


def substream(master_seed: int, *labels) -> np.random.Generator:
    """A generator for the component identified by `labels` under `master_seed`."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=_spawn_key(labels))
    return np.random.default_rng(seq)


def child_seed(master_seed: int, *labels) -> int:
    """A 63-bit integer seed derived the same way as :func:`substream`."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=_spawn_key(labels))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> 1)
