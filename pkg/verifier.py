"""
Independent ground truth (plain BFS on G - F via networkx) and the
exhaustive / sampled verification sweeps.
"""
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import networkx as nx
import numpy as np

from graph_core import INF, FaultSet, Graph, PerturbedGraph, ShortestPathTree, TieDetected, grow_tree
from landmarks import LandmarkMiss
from maximisers import MissingKey
from query_engine import QueryContext
from single_fault import ClassificationMismatch
from workers import fan_out

logger = logging.getLogger(__name__)

Distance = Union[int, float]


def _without(graph: Graph, F: Iterable[int]) -> nx.Graph:
    banned = set(F)
    h = nx.Graph()
    h.add_nodes_from(range(graph.n))
    h.add_edges_from(e for i, e in enumerate(graph.edges) if i not in banned)
    return h


def brute_dist(pg: PerturbedGraph, s: int, t: int, F: Union[FaultSet, Iterable[int]] = ()) -> Distance:
    """Hop distance in G - F by BFS, ignoring the perturbation"""
    edges = F.edges if isinstance(F, FaultSet) else tuple(F)
    try:
        return nx.shortest_path_length(_without(pg.graph, edges), s, t)
    except nx.NetworkXNoPath:
        return INF


def _encode(value: Distance):
    return 'INF' if value == INF else int(value)


@dataclass
class VerifyLimits:
    max_faults: int = 2
    sources: Optional[Sequence[int]] = None
    instrument: bool = True
    jobs: int = 1


@dataclass
class VerificationReport:
    instance: Dict = field(default_factory=dict)
    queries: int = 0
    matches: int = 0
    mismatches: int = 0
    certified: int = 0
    fallbacks: Dict[str, int] = field(default_factory=dict)
    probe_max: int = 0
    probe_total: int = 0
    pair_hit_checked: int = 0
    pair_hit_violations: int = 0
    trapezoid_checked: int = 0
    trapezoid_violations: int = 0
    lca_checked: int = 0
    lca_violations: int = 0
    soundness_violations: int = 0
    failures: List[Dict] = field(default_factory=list)

    @property
    def certified_fraction(self) -> float:
        return self.certified / self.queries if self.queries else 1.0

    @property
    def probe_mean(self) -> float:
        return self.probe_total / self.queries if self.queries else 0.0

    def merge(self, other: 'VerificationReport') -> 'VerificationReport':
        fallbacks = Counter(self.fallbacks)
        fallbacks.update(other.fallbacks)
        counts = {name: getattr(self, name) + getattr(other, name) for name in (
            'queries', 'matches', 'mismatches', 'certified', 'probe_total',
            'pair_hit_checked', 'pair_hit_violations', 'trapezoid_checked', 'trapezoid_violations',
            'lca_checked', 'lca_violations', 'soundness_violations')}
        return VerificationReport(instance=dict(self.instance or other.instance), fallbacks=dict(fallbacks),
                                  probe_max=max(self.probe_max, other.probe_max),
                                  failures=self.failures + other.failures, **counts)

    def to_dict(self) -> Dict:
        return {
            'instance': self.instance,
            'totals': {
                'queries': self.queries,
                'matches': self.matches,
                'mismatches': self.mismatches,
                'certified': self.certified,
                'certified_fraction': round(self.certified_fraction, 6),
                'fallbacks': dict(self.fallbacks),
            },
            'probes': {'max': self.probe_max, 'total': self.probe_total, 'mean': round(self.probe_mean, 4)},
            'property_checks': {
                'pair_hit_checked': self.pair_hit_checked,
                'pair_hit_violations': self.pair_hit_violations,
                'trapezoid_checked': self.trapezoid_checked,
                'trapezoid_violations': self.trapezoid_violations,
                'lca_checked': self.lca_checked,
                'lca_violations': self.lca_violations,
            },
            'soundness_violations': self.soundness_violations,
            'failures': self.failures,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'VerificationReport':
        totals, probes, checks = data['totals'], data['probes'], data['property_checks']
        return cls(
            instance=data['instance'], queries=totals['queries'], matches=totals['matches'],
            mismatches=totals['mismatches'], certified=totals['certified'],
            fallbacks=dict(totals['fallbacks']), probe_max=probes['max'], probe_total=probes['total'],
            soundness_violations=data['soundness_violations'], failures=list(data['failures']),
            **checks,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> 'VerificationReport':
        return cls.from_dict(json.loads(text))

    def summary(self) -> str:
        rate = 100.0 * self.matches / self.queries if self.queries else 100.0
        return (f"queries {self.queries}, matches {rate:.0f}%, "
                f"certified {100.0 * self.certified_fraction:.2f}%, "
                f"probes max {self.probe_max} mean {self.probe_mean:.2f}, "
                f"property violations {self.pair_hit_violations}/{self.trapezoid_violations}/{self.lca_violations}, "
                f"soundness violations {self.soundness_violations}")


class _FaultWorld:
    """Ground truth for one fault set: BFS lengths and perturbed paths, computed lazily per source"""

    def __init__(self, pg: PerturbedGraph, F: FaultSet):
        self.pg = pg
        self.F = F
        self.h = _without(pg.graph, F.edges)
        self._lengths: Dict[int, Dict[int, int]] = {}
        self._trees: Dict[int, Optional[ShortestPathTree]] = {}

    def dist(self, s: int, t: int) -> Distance:
        lengths = self._lengths.get(s)
        if lengths is None:
            lengths = nx.single_source_shortest_path_length(self.h, s)
            self._lengths[s] = lengths
        return lengths.get(t, INF)

    def _tree(self, s: int) -> Optional[ShortestPathTree]:
        if s not in self._trees:
            try:
                self._trees[s] = grow_tree(self.pg, s, self.F.edges)
            except TieDetected:
                self._trees[s] = None
        return self._trees[s]

    def path(self, s: int, t: int) -> Optional[List[int]]:
        """Vertices of the unique perturbed shortest path, None on a tie or disconnection"""
        tree = self._tree(s)
        if tree is None or not tree.reachable(t):
            return None
        return tree.path_to(t)

    def path_edges(self, s: int, t: int) -> Optional[Set[int]]:
        tree = self._tree(s)
        if tree is None or not tree.reachable(t):
            return None
        return set(tree.path_edges(t))


def _check_trapezoid(report: VerificationReport, world: _FaultWorld, event: Tuple, epsilon: float):
    """Interior vertices z of P[p, t] keep |za - F| > eps * min(|pz|, |zt|).

    P is the F-avoiding shortest y-t path. Only checked when p lies on P and
    |ya - F| <= |P[y, p]|; otherwise nothing is claimed about p.
    """
    _, _, t, y, p, a = event
    path = world.path(y, t)
    if path is None or p not in path:
        return
    at = path.index(p)
    if world.dist(y, a) > at:
        return
    report.trapezoid_checked += 1
    tail = path[at:]
    last = len(tail) - 1
    for idx in range(1, last):
        if not world.dist(tail[idx], a) > epsilon * min(idx, last - idx):
            report.trapezoid_violations += 1
            return


def _check_instrumentation(report: VerificationReport, world: _FaultWorld, ctx: QueryContext, oracle):
    epsilon = oracle.config.epsilon
    for cs, ct, value, _ in ctx.candidates:
        if value < world.dist(cs, ct):
            report.soundness_violations += 1

    for ks, kt, key, entry in ctx.admissions:
        edges = world.path_edges(ks, kt)
        if edges is None:
            continue
        report.pair_hit_checked += 1
        if not (set(entry.pair) & edges) and entry.length != world.dist(ks, kt):
            report.pair_hit_violations += 1

    for event in ctx.trace:
        if event[0] == 'chain':
            _check_trapezoid(report, world, event, epsilon)
            continue
        if event[0] != 'geometric':
            continue
        _, s, t, p, i, e1, a, e2, c = event
        to_a = oracle.spts[p].path_to(a)
        to_c = oracle.sfi.tree(p, e1).path_to(c)
        if to_a and to_c:
            report.lca_checked += 1
            common = 0
            while common < min(len(to_a), len(to_c)) and to_a[common] == to_c[common]:
                common += 1
            # |pz| for the junction z is the index of the last shared vertex
            if common - 1 > (1 + epsilon) ** i + 1e-9:
                report.lca_violations += 1


def _check_query(report: VerificationReport, oracle, world: _FaultWorld, s: int, t: int, instrument: bool):
    F = world.F
    expected = world.dist(s, t)
    report.queries += 1
    try:
        outcome = oracle.query(s, t, F, instrument=instrument)
    except (MissingKey, LandmarkMiss, ClassificationMismatch) as e:
        # strict mode only
        report.mismatches += 1
        report.fallbacks['strict_error'] = report.fallbacks.get('strict_error', 0) + 1
        report.failures.append({'s': s, 't': t, 'F': list(F.edges),
                                'expected': _encode(expected), 'got': type(e).__name__})
        return
    if outcome.context is not None:
        _check_instrumentation(report, world, outcome.context, oracle)
    report.probe_total += outcome.probes
    report.probe_max = max(report.probe_max, outcome.probes)
    for kind, count in outcome.fallbacks.items():
        report.fallbacks[kind] = report.fallbacks.get(kind, 0) + count
    if outcome.certified:
        report.certified += 1
    if outcome.distance < expected:
        report.soundness_violations += 1
    if outcome.distance == expected:
        report.matches += 1
    else:
        report.mismatches += 1
        report.failures.append({'s': s, 't': t, 'F': list(F.edges),
                                'expected': _encode(expected), 'got': _encode(outcome.distance)})


def fault_sets(graph: Graph, max_faults: int) -> List[FaultSet]:
    out = []
    for size in range(0, min(max_faults, 2) + 1):
        out.extend(FaultSet.of(graph, combo) for combo in combinations(range(graph.m), size))
    return out


def _instance(pg: PerturbedGraph, oracle) -> Dict:
    return {'n': pg.n, 'm': pg.graph.m, 'seed': pg.seed, 'scale': pg.scale,
            'hardened': oracle.config.hardened, 'landmark_c': oracle.config.landmark_c,
            'epsilon': oracle.config.epsilon}


def _verify_block(state, F: FaultSet) -> VerificationReport:
    pg, oracle, sources, instrument = state
    report = VerificationReport()
    world = _FaultWorld(pg, F)
    for s in sources:
        for t in range(pg.n):
            _check_query(report, oracle, world, s, t, instrument)
    return report


def verify_exhaustive(pg: PerturbedGraph, oracle, limits: Optional[VerifyLimits] = None) -> VerificationReport:
    """Every ordered (s, t) and every F within the limits, compared against BFS"""
    limits = limits or VerifyLimits()
    sources = list(limits.sources) if limits.sources is not None else list(range(pg.n))
    parts = fan_out(_verify_block, fault_sets(pg.graph, limits.max_faults),
                    (pg, oracle, sources, limits.instrument), limits.jobs)

    report = VerificationReport(instance=_instance(pg, oracle))
    for part in parts:
        report = report.merge(part)
    logger.info(f"Exhaustive verification: {report.summary()}")
    return report


def verify_sampled(pg: PerturbedGraph, oracle, count: int, seed: int = 0,
                   instrument: bool = False) -> VerificationReport:
    """`count` random (s, t, F) with |F| = 2 (or fewer when m < 2)"""
    rng = np.random.default_rng(seed)
    report = VerificationReport(instance=_instance(pg, oracle))
    for _ in range(count):
        s, t = (int(x) for x in rng.integers(0, pg.n, size=2))
        size = min(2, pg.graph.m)
        F = FaultSet.of(pg.graph, rng.choice(pg.graph.m, size=size, replace=False).tolist())
        _check_query(report, oracle, _FaultWorld(pg, F), s, t, instrument)
    logger.info(f"Sampled verification: {report.summary()}")
    return report
