"""Deterministic seed derivation.

A master seed fans out to per-stage / per-instance sub-seeds by hashing the
seed together with string tags. Outputs are independent of worker scheduling
because each unit of work derives its own seed from stable identifiers.
"""

import hashlib
import random


def derive_seed(master: int, *tags: str) -> int:
    material = str(master) + "\x1f" + "\x1f".join(tags)
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(master: int, *tags: str) -> random.Random:
    return random.Random(derive_seed(master, *tags))
