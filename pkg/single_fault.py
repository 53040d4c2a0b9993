"""
Single-fault distance service: one replacement tree per (source, tree edge),
secondary-path membership, fault orientation and the exact cut evaluation
used to audit two-fault answers.
"""
import heapq
import logging
from typing import Dict, List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from graph_core import (
    INF, W_INF, FaultSet, PerturbedGraph, ShortestPathTree, grow_tree, edge_on_path,
)
from workers import fan_out

logger = logging.getLogger(__name__)


class ClassificationMismatch(Exception):
    """No consistent orientation exists for the given fault set"""


class FaultOffsets(NamedTuple):
    se1: Union[int, float]
    te1: Union[int, float]
    se2: Union[int, float]
    te2: Union[int, float]


class DistanceVector(NamedTuple):
    hops: np.ndarray
    weights: np.ndarray
    tree: ShortestPathTree


class SingleFaultIndex:
    """Replacement trees of G - e for every source and every edge of its shortest path tree"""

    def __init__(self, pg: PerturbedGraph, spts: Sequence[ShortestPathTree],
                 trees: Dict[Tuple[int, int], ShortestPathTree]):
        self.pg = pg
        self.spts = spts
        self._trees = trees

    def __len__(self):
        return len(self._trees)

    def tree(self, s: int, e: int) -> ShortestPathTree:
        """SPT of G - e from s; the fault-free tree when e is not a tree edge of T_s"""
        return self._trees.get((s, e), self.spts[s])

    def has_tree(self, s: int, e: int) -> bool:
        return (s, e) in self._trees

    def dist_1f(self, s: int, t: int, e: int) -> Union[int, float]:
        return self.tree(s, e).hop(t)

    def dist_1f_w(self, s: int, t: int, e: int) -> int:
        return int(self.tree(s, e).dist_w[t])

    def edge_on_secondary(self, s: int, t: int, e1: int, e2: int) -> bool:
        """e2 lies on st minus e1 iff |st - e1| = |se2 - e1| + w(e2) + |e2t - e1|"""
        if e1 == e2:
            return False
        ts1, tt1 = self.tree(s, e1), self.tree(t, e1)
        if not ts1.reachable(t):
            return False
        u, v = self.pg.graph.endpoints(e2)
        x, y = (u, v) if ts1.dist_w[u] <= ts1.dist_w[v] else (v, u)
        return int(ts1.dist_w[x]) + self.pg.weight(e2) + int(tt1.dist_w[y]) == int(ts1.dist_w[t])

    def on_primary(self, s: int, t: int, e: int) -> bool:
        return edge_on_path(self.pg, self.spts, s, t, e)

    def orient_faults(self, s: int, t: int, F: FaultSet) -> FaultSet:
        """Pick e1 on st (nearest s when both are), label a/c as the endpoints nearer s"""
        ts = self.spts[s]
        on_st = [e for e in F.edges if self.on_primary(s, t, e)]
        if not on_st:
            raise ClassificationMismatch(f"no fault of {F.edges} lies on the {s}-{t} path")

        def near_far(tree: ShortestPathTree, e: int) -> Tuple[int, int]:
            u, v = self.pg.graph.endpoints(e)
            return (u, v) if tree.dist_w[u] <= tree.dist_w[v] else (v, u)

        e1 = min(on_st, key=lambda e: (min(ts.dist_w[x] for x in self.pg.graph.endpoints(e)), e))
        a, b = near_far(ts, e1)
        e2 = F.other(e1)
        if e2 is None:
            return F.oriented(e1, a, b)

        if e2 in on_st:
            c, d = near_far(ts, e2)
        else:
            ts1 = self.tree(s, e1)
            u, v = self.pg.graph.endpoints(e2)
            if not (ts1.reachable(u) or ts1.reachable(v)):
                raise ClassificationMismatch(f"edge {e2} is unreachable from {s} once {e1} fails")
            c, d = near_far(ts1, e2)
        return F.oriented(e1, a, b, e2, c, d)

    def fault_offsets(self, s: int, t: int, F: FaultSet) -> FaultOffsets:
        """Hop offsets |se1|, |te1| and |se2 - e1|, |te2 - e1| of an oriented fault set"""
        if F.e1 is None:
            raise ClassificationMismatch("fault set is not oriented")
        se1 = self.spts[s].hop(F.a)
        te1 = self.spts[t].hop(F.b)
        if F.e2 is None:
            return FaultOffsets(se1, te1, INF, INF)
        if self.on_primary(s, t, F.e2):
            return FaultOffsets(se1, te1, self.spts[s].hop(F.c), self.spts[t].hop(F.d))
        return FaultOffsets(se1, te1, self.tree(s, F.e1).hop(F.c), self.tree(t, F.e1).hop(F.d))

    def cut_distance(self, s: int, t: int, F: FaultSet) -> Union[int, float]:
        """Exact |st - F| for |F| <= 2 from the single-fault trees alone.

        Inside H = G - e1 the replacement path for e2 leaves the s-side of the
        cut made by e2 in the H-tree of s exactly once, so its length is the
        minimum over cut edges (u, v) of |su|_H + w(u, v) + |vt|_H.
        """
        if s == t:
            return 0
        ts = self.spts[s]
        if not ts.reachable(t):
            return INF
        on_st = [e for e in F.edges if self.on_primary(s, t, e)]
        if not on_st:
            return ts.hop(t)
        e1 = on_st[0]
        e2 = F.other(e1)
        if e2 is None or not self.edge_on_secondary(s, t, e1, e2):
            return self.dist_1f(s, t, e1)

        hs, ht = self.tree(s, e1), self.tree(t, e1)
        d = hs.lower_endpoint(self.pg, e2)
        edges = np.asarray(self.pg.graph.edges, dtype=np.int64)
        keep = np.ones(len(edges), dtype=bool)
        keep[list(F.edges)] = False
        edges = edges[keep]
        w = self.pg.weights[keep]
        n = self.pg.n

        below = hs.ancestor_matrix([d], np.arange(n))[0]
        upper = (hs.dist_w < W_INF) & ~below
        best = None
        for x, y in ((edges[:, 0], edges[:, 1]), (edges[:, 1], edges[:, 0])):
            mask = upper[x] & below[y] & (ht.dist_w[y] < W_INF)
            if mask.any():
                total = hs.dist_w[x[mask]] + w[mask] + ht.dist_w[y[mask]]
                low = int(total.min())
                best = low if best is None else min(best, low)
        if best is None:
            return INF
        return best // self.pg.base

    def pair_hops(self, s: int, e1: int, e2: int) -> np.ndarray:
        """Hop distances from s in G - {e1, e2}, W_INF where unreachable.

        Vertices outside the subtree hanging below e2 in the replacement tree
        of (s, e1) keep their distance; the subtree is re-settled by a
        Dijkstra seeded through its boundary edges.
        """
        base = self.tree(s, e1)
        hops = base.dist_h.copy()
        low = base.lower_endpoint(self.pg, e2)
        if low is None:
            return hops
        below = base.subtree(low)
        inside = np.zeros(self.pg.n, dtype=bool)
        inside[below] = True
        hops[below] = W_INF
        banned = (e1, e2)
        adjacency = self.pg.graph.adjacency
        heap = []
        for v in below.tolist():
            seeds = [int(hops[u]) + 1 for u, e in adjacency[v]
                     if e not in banned and not inside[u] and hops[u] < W_INF]
            if seeds:
                hops[v] = min(seeds)
                heap.append((int(hops[v]), v))
        heapq.heapify(heap)
        while heap:
            d, v = heapq.heappop(heap)
            if d > hops[v]:
                continue
            for u, e in adjacency[v]:
                if e in banned or not inside[u] or d + 1 >= hops[u]:
                    continue
                hops[u] = d + 1
                heapq.heappush(heap, (d + 1, u))
        return hops


def _replacement_trees(state, s: int) -> List[Tuple[Tuple[int, int], ShortestPathTree]]:
    pg, spts = state
    return [((s, e), grow_tree(pg, s, (e,))) for e in spts[s].tree_edges()]


def build_single_fault(pg: PerturbedGraph, spts: Sequence[ShortestPathTree], jobs: int = 1) -> SingleFaultIndex:
    """One tie-checked Dijkstra on G - e for every source s and tree edge e of T_s"""
    trees: Dict[Tuple[int, int], ShortestPathTree] = {}
    for chunk in fan_out(_replacement_trees, range(pg.n), (pg, spts), jobs):
        trees.update(chunk)
    logger.info(f"Single-fault index: {len(trees)} replacement trees over {pg.n} sources")
    return SingleFaultIndex(pg, spts, trees)


def dist_1f(idx: SingleFaultIndex, s: int, t: int, e: int) -> Union[int, float]:
    return idx.dist_1f(s, t, e)


def edge_on_secondary(idx: SingleFaultIndex, s: int, t: int, e1: int, e2: int) -> bool:
    return idx.edge_on_secondary(s, t, e1, e2)


def orient_faults(idx: SingleFaultIndex, s: int, t: int, F: FaultSet) -> FaultSet:
    return idx.orient_faults(s, t, F)


def two_fault_dist_vector(pg: PerturbedGraph, s: int, F: Union[FaultSet, Sequence[int]]) -> DistanceVector:
    """Tie-checked Dijkstra on G - F; hops are float with inf for unreachable vertices"""
    edges = F.edges if isinstance(F, FaultSet) else tuple(F)
    if len(set(edges)) > 2:
        raise ValueError("at most two faults are supported")
    tree = grow_tree(pg, s, edges)
    hops = np.where(tree.dist_w < W_INF, tree.dist_h, 0).astype(float)
    hops[tree.dist_w >= W_INF] = np.inf
    return DistanceVector(hops, tree.dist_w, tree)
