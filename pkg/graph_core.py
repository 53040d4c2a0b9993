"""
Graph representation, perturbed unique shortest paths, shortest path trees,
LCA / subtree indices and the intactness predicates used by every other module.
"""
import heapq
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

# Hop distance of an unreachable vertex. Compares greater than every finite
# value and is absorbing under addition.
INF = math.inf

# Array sentinel for unreachable entries; three of them still fit in int64.
W_INF = np.int64(1 << 60)


class GraphFormatError(Exception):
    """Malformed edge-list input"""

    def __init__(self, message: str, line_no: int = 0):
        super().__init__(f"line {line_no}: {message}" if line_no else message)
        self.line_no = line_no


class TieDetected(Exception):
    """Two distinct predecessors reached a vertex with equal perturbed distance"""

    def __init__(self, vertex: int):
        super().__init__(f"tie at vertex {vertex}: shortest path is not unique")
        self.vertex = vertex

    def __reduce__(self):
        return TieDetected, (self.vertex,)


class UnreachableVertex(Exception):
    """A vertex is not reachable from the tree source"""

    def __init__(self, vertex: int, source: int):
        super().__init__(f"vertex {vertex} is unreachable from {source}")
        self.vertex = vertex
        self.source = source


class Graph:
    """Undirected simple graph with stable edge ids (assigned in input order)"""

    def __init__(self, n: int, edges: Sequence[Tuple[int, int]]):
        if n < 0:
            raise ValueError("vertex count must be non-negative")
        self.n = n
        self.edges: Tuple[Tuple[int, int], ...] = tuple((min(u, v), max(u, v)) for u, v in edges)
        self._edge_index = {}
        adjacency: List[List[Tuple[int, int]]] = [[] for _ in range(n)]
        for eid, (u, v) in enumerate(self.edges):
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(f"edge {eid} has a vertex outside [0, {n})")
            if u == v:
                raise GraphFormatError(f"self-loop at vertex {u}")
            if (u, v) in self._edge_index:
                raise GraphFormatError(f"duplicate edge ({u}, {v})")
            self._edge_index[(u, v)] = eid
            adjacency[u].append((v, eid))
            adjacency[v].append((u, eid))
        self.adjacency: Tuple[Tuple[Tuple[int, int], ...], ...] = tuple(tuple(a) for a in adjacency)

    @property
    def m(self) -> int:
        return len(self.edges)

    def edge_id(self, u: int, v: int) -> int:
        try:
            return self._edge_index[(min(u, v), max(u, v))]
        except KeyError:
            raise KeyError(f"no edge ({u}, {v})") from None

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self._edge_index

    def endpoints(self, e: int) -> Tuple[int, int]:
        return self.edges[e]

    def to_edge_list(self) -> str:
        lines = [f"{self.n} {self.m}"]
        lines.extend(f"{u} {v}" for u, v in self.edges)
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def load_graph(text: Union[str, Iterable[str]]) -> Graph:
    """Parse the 'n m' + m lines of 'u v' edge-list format ('#' starts a comment)"""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    header = None
    edges: List[Tuple[int, int]] = []
    seen = set()
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"expected two integers, got {line!r}", line_no)
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"non-integer token in {line!r}", line_no) from None

        if header is None:
            if a < 0 or b < 0:
                raise GraphFormatError("negative header value", line_no)
            header = (a, b)
            continue

        n = header[0]
        if not (0 <= a < n and 0 <= b < n):
            raise GraphFormatError(f"vertex out of range [0, {n}) in {line!r}", line_no)
        if a == b:
            raise GraphFormatError(f"self-loop at vertex {a}", line_no)
        key = (min(a, b), max(a, b))
        if key in seen:
            raise GraphFormatError(f"duplicate edge {key}", line_no)
        seen.add(key)
        edges.append((a, b))

    if header is None:
        raise GraphFormatError("missing 'n m' header")
    if len(edges) != header[1]:
        raise GraphFormatError(f"header announces {header[1]} edges, found {len(edges)}")
    return Graph(header[0], edges)


def load_dimacs(text: Union[str, Iterable[str]]) -> Graph:
    """Parse a DIMACS shortest-path '.gr' file; arcs are merged into undirected edges and weights ignored"""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    n = None
    edges: List[Tuple[int, int]] = []
    seen = set()
    for line_no, raw in enumerate(lines, start=1):
        parts = raw.split()
        if not parts or parts[0] == 'c':
            continue
        if parts[0] == 'p':
            if len(parts) < 4:
                raise GraphFormatError("malformed problem line", line_no)
            n = int(parts[2])
        elif parts[0] == 'a':
            if n is None:
                raise GraphFormatError("arc before problem line", line_no)
            u, v = int(parts[1]) - 1, int(parts[2]) - 1
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(f"vertex out of range in {raw.strip()!r}", line_no)
            key = (min(u, v), max(u, v))
            if u == v or key in seen:
                continue
            seen.add(key)
            edges.append(key)
        else:
            raise GraphFormatError(f"unknown line type {parts[0]!r}", line_no)
    if n is None:
        raise GraphFormatError("missing problem line")
    return Graph(n, edges)


def read_graph_file(path: Union[str, Path]) -> Graph:
    path = Path(path)
    text = path.read_text()
    if path.suffix == '.gr':
        return load_dimacs(text)
    return load_graph(text)


class PerturbedGraph:
    """Graph with weights w(e) = B + r_e; the hop count of a path is floor(weight / B)"""

    def __init__(self, graph: Graph, base: int, perturbation: np.ndarray, seed: int, scale: int = 1):
        self.graph = graph
        self.base = int(base)
        self.perturbation = np.asarray(perturbation, dtype=np.int64)
        self.seed = seed
        self.scale = scale
        self.weights = self.perturbation + np.int64(self.base)

    @property
    def n(self) -> int:
        return self.graph.n

    def weight(self, e: int) -> int:
        return int(self.weights[e])

    def hops(self, dist_w) -> Union[int, float]:
        """Convert a perturbed distance to hops (INF for the array sentinel)"""
        dist_w = int(dist_w)
        if dist_w >= W_INF:
            return INF
        return dist_w // self.base


def perturb(g: Graph, seed: int, scale: int = 1) -> PerturbedGraph:
    """Draw r_e uniform in [1, scale*n^2) and set B = scale*n^3"""
    n = max(g.n, 2)
    base = scale * n ** 3
    rng = np.random.default_rng(seed)
    perturbation = rng.integers(1, scale * n * n, size=g.m, dtype=np.int64)
    return PerturbedGraph(g, base, perturbation, seed, scale)


class ShortestPathTree:
    """Unique shortest path tree from one source with Euler-tour timestamps"""

    def __init__(self, pg: PerturbedGraph, source: int, parent: np.ndarray,
                 parent_edge: np.ndarray, dist_w: np.ndarray):
        self.source = source
        self.parent = parent
        self.parent_edge = parent_edge
        self.dist_w = dist_w
        reachable = dist_w < W_INF
        self.dist_h = np.where(reachable, dist_w // pg.base, W_INF)
        self._index_tour()

    def _index_tour(self):
        n = len(self.parent)
        children: List[List[int]] = [[] for _ in range(n)]
        for v in range(n):
            p = int(self.parent[v])
            if v != self.source and p >= 0:
                children[p].append(v)

        self.tin = np.full(n, -1, dtype=np.int64)
        self.tout = np.full(n, -1, dtype=np.int64)
        self.first = np.full(n, -1, dtype=np.int64)
        euler: List[int] = []
        order: List[int] = []
        clock = 0
        stack = [(self.source, 0)]
        while stack:
            v, idx = stack.pop()
            if idx == 0:
                self.tin[v] = clock
                clock += 1
                order.append(v)
                self.first[v] = len(euler)
            euler.append(v)
            kids = children[v]
            if idx < len(kids):
                stack.append((v, idx + 1))
                stack.append((kids[idx], 0))
            else:
                self.tout[v] = clock - 1
        self.euler = np.asarray(euler, dtype=np.int64)
        self.preorder = np.asarray(order, dtype=np.int64)
        self.children = children

    def reachable(self, v: int) -> bool:
        return self.dist_w[v] < W_INF

    def hop(self, v: int) -> Union[int, float]:
        return int(self.dist_h[v]) if self.dist_w[v] < W_INF else INF

    def is_ancestor(self, u: int, v: int) -> bool:
        """True iff u lies on the tree path source -> v (u == v included)"""
        if self.tin[u] < 0 or self.tin[v] < 0:
            return False
        return self.tin[u] <= self.tin[v] <= self.tout[u]

    def ancestor_matrix(self, zs, vs) -> np.ndarray:
        """Boolean matrix [i, j] = zs[i] is an ancestor of vs[j]"""
        zs = np.asarray(zs, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        tin_z, tout_z = self.tin[zs][:, None], self.tout[zs][:, None]
        tin_v = self.tin[vs][None, :]
        return (tin_v >= 0) & (tin_z >= 0) & (tin_z <= tin_v) & (tin_v <= tout_z)

    def path_avoids(self, pg: 'PerturbedGraph', v: int, F: 'FaultSet') -> bool:
        """True iff no edge of F lies on the tree path source -> v"""
        if not self.reachable(v):
            return False
        for e in F.edges:
            low = self.lower_endpoint(pg, e)
            if low is not None and self.is_ancestor(low, v):
                return False
        return True

    def path_to(self, v: int) -> List[int]:
        if not self.reachable(v):
            return []
        path = [v]
        while path[-1] != self.source:
            path.append(int(self.parent[path[-1]]))
        path.reverse()
        return path

    def path_edges(self, v: int) -> List[int]:
        edges = []
        while self.reachable(v) and v != self.source:
            edges.append(int(self.parent_edge[v]))
            v = int(self.parent[v])
        edges.reverse()
        return edges

    def ancestor_at_depth(self, v: int, depth: int) -> int:
        """Vertex at hop distance `depth` from the source on the path to v"""
        if not self.reachable(v):
            return v
        steps = int(self.dist_h[v]) - max(depth, 0)
        while steps > 0:
            v = int(self.parent[v])
            steps -= 1
        return v

    def subtree(self, v: int) -> np.ndarray:
        """Vertices below v, v included, in preorder"""
        if self.tin[v] < 0:
            return self.preorder[:0]
        return self.preorder[self.tin[v]:self.tout[v] + 1]

    def tree_edges(self) -> List[int]:
        return [int(e) for e in self.parent_edge if e >= 0]

    def lower_endpoint(self, pg: PerturbedGraph, e: int) -> Optional[int]:
        """Child endpoint of e if e is a tree edge, else None"""
        u, v = pg.graph.endpoints(e)
        if self.parent_edge[v] == e:
            return v
        if self.parent_edge[u] == e:
            return u
        return None


def grow_tree(pg: PerturbedGraph, s: int, banned: Iterable[int] = ()) -> ShortestPathTree:
    """Dijkstra over perturbed weights on G minus `banned`, raising TieDetected on any tie"""
    g = pg.graph
    if not 0 <= s < g.n:
        raise ValueError(f"source {s} outside [0, {g.n})")
    banned = frozenset(banned)
    weights = pg.weights
    dist = [int(W_INF)] * g.n
    parent = [-1] * g.n
    parent_edge = [-1] * g.n
    dist[s] = 0
    parent[s] = s
    heap = [(0, s)]
    done = [False] * g.n
    # tied[v]: the current tentative distance of v was reached twice
    tied = [False] * g.n
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        if tied[u]:
            raise TieDetected(u)
        done[u] = True
        for v, e in g.adjacency[u]:
            if e in banned or done[v]:
                continue
            nd = d + int(weights[e])
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                parent_edge[v] = e
                tied[v] = False
                heapq.heappush(heap, (nd, v))
            elif nd == dist[v] and parent_edge[v] != e:
                tied[v] = True
    return ShortestPathTree(
        pg, s,
        np.asarray(parent, dtype=np.int64),
        np.asarray(parent_edge, dtype=np.int64),
        np.asarray(dist, dtype=np.int64),
    )


class LcaIndex:
    """Sparse-table range minimum over the Euler tour of one tree"""

    def __init__(self, spt: ShortestPathTree):
        self.spt = spt
        euler = spt.euler
        self._depth = spt.dist_h[euler]
        size = len(euler)
        table = [np.arange(size, dtype=np.int64)]
        j = 1
        while (1 << j) <= size:
            prev = table[-1]
            half = 1 << (j - 1)
            count = size - (1 << j) + 1
            left = prev[:count]
            right = prev[half:half + count]
            table.append(np.where(self._depth[left] <= self._depth[right], left, right))
            j += 1
        self._table = table

    def lca(self, u: int, v: int) -> int:
        spt = self.spt
        for x in (u, v):
            if not spt.reachable(x):
                raise UnreachableVertex(x, spt.source)
        lo, hi = sorted((int(spt.first[u]), int(spt.first[v])))
        j = (hi - lo + 1).bit_length() - 1
        a = self._table[j][lo]
        b = self._table[j][hi - (1 << j) + 1]
        best = a if self._depth[a] <= self._depth[b] else b
        return int(spt.euler[best])


def build_spt(pg: PerturbedGraph, s: int) -> Tuple[ShortestPathTree, LcaIndex]:
    spt = grow_tree(pg, s)
    return spt, LcaIndex(spt)


def lca(idx: LcaIndex, u: int, v: int) -> int:
    return idx.lca(u, v)


@dataclass(frozen=True)
class FaultSet:
    """Up to two failed edges; orientation labels are filled in by orient_faults"""
    edges: Tuple[int, ...]
    endpoints: Tuple[Tuple[int, int], ...]
    e1: Optional[int] = None
    e2: Optional[int] = None
    a: Optional[int] = None
    b: Optional[int] = None
    c: Optional[int] = None
    d: Optional[int] = None

    @classmethod
    def of(cls, graph: Graph, edges: Iterable[int] = ()) -> 'FaultSet':
        ids = tuple(sorted(set(int(e) for e in edges)))
        if len(ids) > 2:
            raise ValueError(f"at most two faults are supported, got {len(ids)}")
        for e in ids:
            if not 0 <= e < graph.m:
                raise ValueError(f"edge id {e} outside [0, {graph.m})")
        return cls(ids, tuple(graph.endpoints(e) for e in ids))

    @property
    def vertices(self) -> Tuple[int, ...]:
        return tuple(x for pair in self.endpoints for x in pair)

    def __len__(self):
        return len(self.edges)

    def __contains__(self, e) -> bool:
        return e in self.edges

    def other(self, e: int) -> Optional[int]:
        rest = [f for f in self.edges if f != e]
        return rest[0] if rest else None

    def oriented(self, e1: int, a: int, b: int, e2: Optional[int] = None,
                 c: Optional[int] = None, d: Optional[int] = None) -> 'FaultSet':
        return replace(self, e1=e1, a=a, b=b, e2=e2, c=c, d=d)


def edge_on_path(pg: PerturbedGraph, spts: Sequence[ShortestPathTree], s: int, t: int, e: int) -> bool:
    """e lies on the unique s-t path iff |st| = |sx| + w(e) + |yt| with x the endpoint nearer s"""
    ts, tt = spts[s], spts[t]
    if not ts.reachable(t):
        return False
    u, v = pg.graph.endpoints(e)
    x, y = (u, v) if ts.dist_w[u] <= ts.dist_w[v] else (v, u)
    return int(ts.dist_w[x]) + pg.weight(e) + int(tt.dist_w[y]) == int(ts.dist_w[t])


def prefix_intact(spt: ShortestPathTree, x: int, F: FaultSet) -> bool:
    """No endpoint of F lies strictly between the source and x on the tree path"""
    for z in F.vertices:
        if z != spt.source and z != x and spt.is_ancestor(z, x):
            return False
    return True


def subtree_intact(spt: ShortestPathTree, x: int, F: FaultSet) -> bool:
    """No endpoint of F lies in the subtree T(x)"""
    for z in F.vertices:
        if spt.is_ancestor(x, z):
            return False
    return True


def is_clean(spt: ShortestPathTree, x: int, F: FaultSet) -> bool:
    return prefix_intact(spt, x, F) and subtree_intact(spt, x, F)


def clean_mask(spt: ShortestPathTree, endpoints: np.ndarray, candidates: Sequence[int]) -> np.ndarray:
    """Vectorised is_clean: rows are endpoint tuples of fault sets, columns candidate vertices"""
    Z = np.asarray(endpoints, dtype=np.int64)
    P = np.asarray(candidates, dtype=np.int64)
    tin, tout = spt.tin, spt.tout
    tz, oz = tin[Z][:, :, None], tout[Z][:, :, None]
    tp, op = tin[P][None, None, :], tout[P][None, None, :]
    z_above_p = (tz >= 0) & (tp >= 0) & (tz <= tp) & (tp <= oz)
    strictly = (Z[:, :, None] != spt.source) & (Z[:, :, None] != P[None, None, :])
    p_above_z = (tz >= 0) & (tp >= 0) & (tp <= tz) & (tz <= op)
    return ~((z_above_p & strictly) | p_above_z).any(axis=1)
