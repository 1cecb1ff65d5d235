"""Deterministic seed derivation and torch setup.

A single global seed fans out to per-job seeds through a hash of the job
label, so independent jobs can run in any order (or in parallel) and still
reproduce bit-identically.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch

_MASK63 = (1 << 63) - 1


def derive_seed(*parts) -> int:
    """Map a global seed plus any label parts to a stable 63-bit seed."""
    text = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & _MASK63


def rng_from(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


def seed_torch(seed: int) -> None:
    """Seed torch and pin it to one CPU thread for reproducible training."""
    torch.set_num_threads(1)
    torch.manual_seed(seed & _MASK63)
