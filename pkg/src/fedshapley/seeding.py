"""Stable seed derivation.

Component seeds are derived from a master seed and a label path via SHA-256,
so adding a new consumer never perturbs the random streams of existing ones.
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *labels: object) -> int:
    """Derive a 64-bit child seed from ``master`` and a label path."""
    text = str(int(master)) + "".join(f"|{label}" for label in labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
