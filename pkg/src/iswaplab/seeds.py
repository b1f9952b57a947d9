"""Deterministic seed derivation shared by all stages.

Sub-seeds are derived as sha256(master:stage:index) so any stage or sweep
point can be re-run in isolation and reproduce its stream exactly.
"""

import hashlib


def derive_seed(master: int, stage: str, index: int = 0) -> int:
    digest = hashlib.sha256(f"{master}:{stage}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")
