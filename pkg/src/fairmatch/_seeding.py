"""Labelled sub-seeds so every random stream derives from one user seed."""
import hashlib


def derive_seed(seed, *labels) -> int:
    """Stable 63-bit seed from ``seed`` and a path of labels."""
    key = "/".join([str(seed)] + [str(lab) for lab in labels]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1
