"""Named, platform-stable seed substreams derived from one global seed."""

import hashlib


def substream(seed: int, name: str) -> int:
    """Derive a 31-bit seed for a named consumer of the global seed."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**31 - 1)
