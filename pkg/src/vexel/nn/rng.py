"""Seeded counter-based random streams.

Streams are Philox generators keyed by ``(seed, *labels)``, so draws do not
depend on call order across streams or on the platform.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _label_word(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    return int.from_bytes(hashlib.sha256(str(label).encode("utf-8")).digest()[:4], "little")


def make_rng(seed: int, *labels) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFF, int(seed) >> 32 & 0xFFFFFFFF] + [_label_word(x) for x in labels]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
