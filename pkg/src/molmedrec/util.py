"""Seed plumbing and config hashing shared across stages."""

from __future__ import annotations

import hashlib
import json

import numpy as np

__all__ = ["seed_for", "rng_for", "config_hash"]


def seed_for(root_seed: int, stage: str) -> int:
    """Derive a stable per-stage sub-seed from one root seed.

    Uses sha256 so the mapping is identical across platforms and runs
    (python's hash() is salted per process).
    """
    digest = hashlib.sha256(f"{root_seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(root_seed: int, stage: str) -> np.random.Generator:
    return np.random.default_rng(seed_for(root_seed, stage))


def config_hash(config: dict) -> str:
    """Order-independent sha256 hex digest of a JSON-serializable config."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
