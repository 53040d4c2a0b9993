"""
Hypothesis strategies for small connected graphs.
"""
from itertools import combinations

from hypothesis import strategies as st

from graph_core import Graph


@st.composite
def connected_graphs(draw, min_n: int = 3, max_n: int = 7, max_extra: int = 6) -> Graph:
    """Random spanning tree plus up to `max_extra` extra edges"""
    n = draw(st.integers(min_value=min_n, max_value=max_n))
    edges = set()
    for v in range(1, n):
        u = draw(st.integers(min_value=0, max_value=v - 1))
        edges.add((u, v))
    spare = [e for e in combinations(range(n), 2) if e not in edges]
    if spare:
        extra = draw(st.lists(st.sampled_from(spare), max_size=max_extra, unique=True))
        edges.update(extra)
    return Graph(n, sorted(edges))
