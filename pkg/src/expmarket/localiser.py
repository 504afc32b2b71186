"""Synthetic localiser: appearance seeding, localisation, cross-patch matching.

Stands in for the visual pipeline: a match is a descriptor within threshold,
found by expanding graph neighbourhoods around appearance-space seeds. Every
descriptor comparison is counted through the caller's MatchCounter, which is
the deterministic stand-in for CPU time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, Observation, neighbourhood
from .ids import NodeId
from .patches import Patch
from .pose import Pose


@dataclass
class LocaliserConfig:
    tau_loc: float = 0.3  # descriptor distance accepted as a localisation
    tau_m: float = 0.12  # distance accepted as a merge match
    seed_k: int = 3
    depth: int = 2

    def __post_init__(self):
        if self.tau_loc <= 0 or self.tau_m <= 0:
            raise ValueError("thresholds must be positive")
        if self.seed_k < 1:
            raise ValueError("seed_k must be >= 1")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")


@dataclass
class MatchCounter:
    """Accumulator for descriptor comparisons (the CPU-time proxy)."""

    ops: int = 0

    def add(self, n: int) -> None:
        self.ops += int(n)


@dataclass(frozen=True)
class MatchPair:
    left: NodeId
    right: NodeId
    relative_pose: Pose
    distance: float


@dataclass(frozen=True)
class MatchSet:
    """One-to-one pairing between two divergent patches' nodes."""

    pairs: frozenset[MatchPair] = frozenset()

    def left_ids(self) -> set[NodeId]:
        return {p.left for p in self.pairs}

    def right_ids(self) -> set[NodeId]:
        return {p.right for p in self.pairs}

    def __len__(self) -> int:
        return len(self.pairs)


def appearance_seed(graph: Graph, descriptor, k: int,
                    counter: MatchCounter | None = None) -> list[NodeId]:
    """The k nearest nodes by descriptor distance, ties by node id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ids, mat = graph.descriptor_index()
    if not ids:
        return []
    q = np.asarray(descriptor, dtype=np.float64)
    dists = np.sqrt(np.sum((mat - q) ** 2, axis=1))
    if counter is not None:
        counter.add(len(ids))
    order = np.argsort(dists, kind="stable")  # ids are pre-sorted, so ties fall back to id order
    return [ids[i] for i in order[:k]]


def localise(graph: Graph, obs: Observation, cfg: LocaliserConfig,
             counter: MatchCounter | None = None):
    """Find a map node explaining the observation, or None.

    Seeds come from appearance space; candidates are the union of their
    graph neighbourhoods; the best candidate within tau_loc wins. The caller
    is responsible for bumping the matched node's path_memory.
    """
    seeds = appearance_seed(graph, obs.descriptor, cfg.seed_k, counter)
    if not seeds:
        return None
    candidates: set[NodeId] = set()
    for s in seeds:
        candidates |= neighbourhood(graph, s, cfg.depth)
    cand = sorted(candidates)
    q = np.asarray(obs.descriptor, dtype=np.float64)
    mat = np.array([graph.node(c).descriptor for c in cand], dtype=np.float64)
    dists = np.sqrt(np.sum((mat - q) ** 2, axis=1))
    if counter is not None:
        counter.add(len(cand))
    best = int(np.argmin(dists))  # cand is id-sorted: first minimum = smallest id
    if dists[best] <= cfg.tau_loc:
        return cand[best]
    return None


def match_patches(left: Patch, right: Patch, cfg: LocaliserConfig,
                  counter: MatchCounter | None = None) -> MatchSet:
    """Greedy one-to-one matching between two insert-only divergent patches.

    All cross pairs are ranked by ascending descriptor distance and accepted
    while within tau_m and both endpoints are unmatched. Ties are broken by
    the unordered id pair, which makes the result independent of which side
    calls itself "left".
    """
    lnodes = sorted(left.inserted_nodes(), key=lambda n: n.id)
    rnodes = sorted(right.inserted_nodes(), key=lambda n: n.id)
    if not lnodes or not rnodes:
        return MatchSet()
    lm = np.array([n.descriptor for n in lnodes], dtype=np.float64)
    rm = np.array([n.descriptor for n in rnodes], dtype=np.float64)
    d2 = np.sum(lm * lm, axis=1)[:, None] + np.sum(rm * rm, axis=1)[None, :] - 2.0 * (lm @ rm.T)
    dists = np.sqrt(np.maximum(d2, 0.0))
    if counter is not None:
        counter.add(dists.size)
    within = np.argwhere(dists <= cfg.tau_m)
    ranked = sorted(
        ((float(dists[i, j]), *sorted((lnodes[i].id, rnodes[j].id)), i, j) for i, j in within),
        key=lambda t: t[:3],
    )
    used_l: set[int] = set()
    used_r: set[int] = set()
    pairs = []
    for dist, _, _, i, j in ranked:
        if i in used_l or j in used_r:
            continue
        used_l.add(i)
        used_r.add(j)
        pairs.append(MatchPair(lnodes[i].id, rnodes[j].id, Pose.identity(), dist))
    return MatchSet(frozenset(pairs))
