"""Deterministic RNG derivation.

Sub-generators are derived by hashing a label path, never by sharing one
generator across call sites, so concurrent sessions cannot perturb each
other's sampling and reruns with the same seed reproduce byte-identical
output.  sha256 keeps the derivation stable across platforms and processes
(Python's builtin ``hash`` is salted and must not be used here).
"""

import hashlib
import random


def derive_seed(*parts) -> int:
    label = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(*parts) -> random.Random:
    """Return a ``random.Random`` seeded from the label path."""
    return random.Random(derive_seed(*parts))


def seed_trace(*parts) -> str:
    """Human-readable record of how a sub-generator was derived."""
    return "/".join(str(p) for p in parts)
