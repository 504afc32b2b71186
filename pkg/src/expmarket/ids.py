"""Identifier generation for fleet members and map nodes.

Node ids are 128-bit UUIDs drawn from a per-robot seeded stream so that a
whole run is reproducible while ids stay globally unique across the team.
All derived seeds go through SHA-256 rather than Python's ``hash`` (which
is salted per process).
"""

from __future__ import annotations

import hashlib
import random
import uuid

RobotId = int
NodeId = uuid.UUID


def derive_seed(*parts) -> int:
    """Derive a stable 128-bit integer seed from a label path."""
    text = "/".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:16], "little")


class NodeIdGenerator:
    """Seeded, robot-namespaced source of unique node ids."""

    def __init__(self, seed: int, robot: RobotId):
        self._rng = random.Random(derive_seed(seed, "node-ids", robot))

    def next_id(self) -> NodeId:
        return uuid.UUID(int=self._rng.getrandbits(128), version=4)
