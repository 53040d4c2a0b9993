"""
Sampled landmark hierarchy and the tree walks that search it.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from graph_core import ShortestPathTree

logger = logging.getLogger(__name__)


class LandmarkMiss(Exception):
    """A landmark walk found no member of the requested level within its budget"""

    def __init__(self, start: int, level: int, budget: int):
        super().__init__(f"no level-{level} landmark within {budget} hops of {start}")
        self.start = start
        self.level = level
        self.budget = budget


def level_count(n: int) -> int:
    return max(1, math.ceil(math.log2(n))) if n > 1 else 0


def level_probability(n: int, c: float, level: int) -> float:
    if n <= 1:
        return 1.0
    return min(1.0, c * math.log2(n) / 2 ** level)


@dataclass(frozen=True)
class LandmarkSets:
    levels: np.ndarray  # bool, shape (levels, n)
    c: float
    seed: int

    @property
    def top(self) -> int:
        return self.levels.shape[0] - 1

    def clamp(self, level: int) -> int:
        return min(max(level, 0), self.top)

    def contains(self, level: int, v: int) -> bool:
        return bool(self.levels[self.clamp(level), v])

    def members(self, level: int) -> List[int]:
        return np.flatnonzero(self.levels[self.clamp(level)]).tolist()

    def sizes(self) -> List[int]:
        return self.levels.sum(axis=1).astype(int).tolist()


def sample_landmarks(n: int, c: float, seed: int) -> LandmarkSets:
    """Level i keeps each vertex independently with probability min(1, c*log2(n)/2^i)"""
    if c < 1:
        raise ValueError(f"landmark constant must be >= 1, got {c}")
    rng = np.random.default_rng(seed)
    top = level_count(n)
    probs = np.array([level_probability(n, c, i) for i in range(top + 1)])
    draws = rng.random((top + 1, n))
    levels = draws < probs[:, None]
    lm = LandmarkSets(levels, c, seed)
    logger.info(f"Landmark levels (c={c}): {lm.sizes()}")
    return lm


def landmark_toward_source(spt: ShortestPathTree, lm: LandmarkSets, x: int,
                           level: int, budget: int) -> Optional[int]:
    """First level member on the walk from x toward the source, at most `budget` hops"""
    if not spt.reachable(x):
        return None
    v = x
    for _ in range(max(budget, 0) + 1):
        if lm.contains(level, v):
            return v
        if v == spt.source:
            break
        v = int(spt.parent[v])
    return None


def landmark_from_source(spt: ShortestPathTree, lm: LandmarkSets, x: int,
                         level: int, budget: int) -> Optional[int]:
    """First level member on the path source -> x, at most `budget` hops from the source"""
    if not spt.reachable(x):
        return None
    path = spt.path_to(x)
    for v in path[:max(budget, 0) + 1]:
        if lm.contains(level, v):
            return v
    return None


def walk_limit(spt: ShortestPathTree, x: int, budget: int) -> int:
    """Farthest vertex the toward-source walk from x can reach within `budget` hops"""
    return spt.ancestor_at_depth(x, spt.hop(x) - max(budget, 0))
