"""Small deterministic helpers used across modules."""

import hashlib
import math


def derive_seed(*parts) -> int:
    """Derive a stable 63-bit sub-seed from arbitrary hashable parts.

    Uses keyed-independent blake2b over the repr of the parts, so the
    result is identical across processes and platforms (unlike ``hash``).
    """
    payload = "\x1f".join(repr(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def largest_remainder(fractions, total: int) -> list[int]:
    """Apportion ``total`` into integer counts proportional to ``fractions``.

    Floors the exact quotas, then hands the leftover units to the largest
    fractional remainders; ties go to the earlier index.  The result sums
    to exactly ``total``.
    """
    quotas = [f * total for f in fractions]
    counts = [math.floor(q) for q in quotas]
    leftover = total - sum(counts)
    remainders = sorted(
        range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i)
    )
    for i in remainders[:leftover]:
        counts[i] += 1
    return counts
