"""
Deterministic graph generators and the reference fixtures used by the tests.
"""
import logging
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Tuple, Union

import networkx as nx
import numpy as np

from graph_core import Graph, load_graph

logger = logging.getLogger(__name__)

GENERATOR_KINDS = ('gnp', 'grid', 'cycle', 'complete', 'path', 'chords')

P4_TEXT = "4 3\n0 1\n1 2\n2 3\n"
C5_TEXT = "5 5\n0 1\n1 2\n2 3\n3 4\n4 0\n"
K4_TEXT = "4 6\n0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n"


def _from_networkx(nxg: nx.Graph) -> Graph:
    """Relabel nodes to 0..n-1 in sorted order; edges are emitted sorted"""
    nodes = sorted(nxg.nodes())
    index = {v: i for i, v in enumerate(nodes)}
    edges = sorted((min(index[u], index[v]), max(index[u], index[v])) for u, v in nxg.edges())
    return Graph(len(nodes), edges)


def gnp(n: int, p: float, seed: int, largest_component: bool = True) -> Graph:
    if n < 1 or not 0 <= p <= 1:
        raise ValueError(f"invalid gnp parameters n={n} p={p}")
    nxg = nx.gnp_random_graph(n, p, seed=seed)
    if largest_component and nxg.number_of_nodes() > 0:
        biggest = max(nx.connected_components(nxg), key=lambda c: (len(c), -min(c)))
        if len(biggest) < n:
            logger.info(f"gnp({n}, {p}, seed={seed}): keeping largest component of {len(biggest)} vertices")
        nxg = nxg.subgraph(biggest).copy()
    return _from_networkx(nxg)


def grid(rows: int, cols: int) -> Graph:
    if rows < 1 or cols < 1:
        raise ValueError(f"invalid grid size {rows}x{cols}")
    nxg = nx.grid_2d_graph(rows, cols)
    return _from_networkx(nx.relabel_nodes(nxg, {(r, c): r * cols + c for r, c in nxg.nodes()}))


def cycle(n: int) -> Graph:
    if n < 3:
        raise ValueError("a cycle needs at least 3 vertices")
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def path(n: int) -> Graph:
    if n < 1:
        raise ValueError("a path needs at least 1 vertex")
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def complete(n: int) -> Graph:
    if n < 1:
        raise ValueError("a complete graph needs at least 1 vertex")
    return Graph(n, list(combinations(range(n), 2)))


def cycle_with_chords(n: int, chords: int, seed: int) -> Graph:
    """Long cycle plus a few random chords spanning at least three cycle hops"""
    if n < 6:
        raise ValueError("cycle_with_chords needs at least 6 vertices")
    rng = np.random.default_rng(seed)
    edges: List[Tuple[int, int]] = [(i, (i + 1) % n) for i in range(n)]
    present = {(min(u, v), max(u, v)) for u, v in edges}
    attempts = 0
    added = 0
    while added < chords and attempts < 50 * max(chords, 1):
        attempts += 1
        u, v = (int(x) for x in rng.integers(0, n, size=2))
        gap = min(abs(u - v), n - abs(u - v))
        key = (min(u, v), max(u, v))
        if gap < 3 or key in present:
            continue
        present.add(key)
        edges.append(key)
        added += 1
    return Graph(n, edges)


def generate(kind: str, n: int, param: float = 0.0, seed: int = 1) -> Graph:
    """Dispatch for the CLI: param is p for gnp, columns for grid, chord count for chords"""
    if kind == 'gnp':
        return gnp(n, param, seed)
    if kind == 'grid':
        return grid(n, int(param) if param else n)
    if kind == 'cycle':
        return cycle(n)
    if kind == 'complete':
        return complete(n)
    if kind == 'path':
        return path(n)
    if kind == 'chords':
        return cycle_with_chords(n, int(param) if param else max(1, n // 6), seed)
    raise ValueError(f"unknown generator kind {kind!r}; expected one of {GENERATOR_KINDS}")


def write_edge_list(g: Graph, out: Union[str, Path]) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(g.to_edge_list())
    logger.info(f"Wrote {g} to {out}")
    return out


def fixtures() -> Dict[str, Graph]:
    """Reference fixtures shared by the test suite"""
    return {
        'P4': load_graph(P4_TEXT),
        'C5': load_graph(C5_TEXT),
        'K4': load_graph(K4_TEXT),
        'grid6': grid(6, 6),
        'chords': cycle_with_chords(12, 3, seed=5),
    }
