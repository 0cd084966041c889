"""Reproducible random streams keyed by (run seed, stream id).

Every trajectory or lattice realisation draws from its own generator,
derived from ``SeedSequence(seed, spawn_key=(domain, index))``.  Results are
therefore independent of evaluation order and of how work is partitioned.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "domain_id"]


def domain_id(name: str) -> int:
    """Stable integer tag for an experiment name, so different experiments
    in one run never share streams."""
    return zlib.crc32(name.encode())


def stream(seed: int, index: int, domain: str | int = 0) -> np.random.Generator:
    """Generator for stream ``index`` of ``domain`` under run seed ``seed``."""
    if isinstance(domain, str):
        domain = domain_id(domain)
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(domain), int(index)))
    return np.random.Generator(np.random.SFC64(ss))
