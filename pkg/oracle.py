"""
Builds every index in order (perturbation, trees, single-fault index,
landmarks, maximiser registry) and wires them into a query engine.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Union

from config import Config, config as default_config
from graph_core import (
    FaultSet, Graph, PerturbedGraph, ShortestPathTree, TieDetected, grow_tree, perturb,
)
from landmarks import LandmarkSets, sample_landmarks
from maximisers import KeyEvaluator, MaximiserRegistry
from query_engine import QueryEngine, QueryOutcome
from single_fault import SingleFaultIndex, build_single_fault
from workers import fan_out

logger = logging.getLogger(__name__)

# Largest perturbation scale that keeps three summed path weights inside int64.
MAX_WEIGHT_BITS = 58


@dataclass
class BuildStats:
    n: int
    m: int
    seed: int
    scale: int
    attempts: int
    entries: int
    variant_counts: Dict[str, int]
    family_counts: Dict[str, int]
    phase_seconds: Dict[str, float] = field(default_factory=dict)

    @property
    def wall_seconds(self) -> float:
        return round(sum(self.phase_seconds.values()), 3)

    def to_dict(self) -> Dict:
        return {
            'n': self.n, 'm': self.m, 'seed': self.seed, 'scale': self.scale,
            'attempts': self.attempts, 'entries': self.entries,
            'variants': self.variant_counts, 'families': self.family_counts,
            'phase_seconds': self.phase_seconds, 'wall_seconds': self.wall_seconds,
        }


class DistanceOracle:
    """Dual fault-tolerant distance oracle over one perturbed graph"""

    def __init__(self, pg: PerturbedGraph, spts: List[ShortestPathTree], sfi: SingleFaultIndex,
                 landmarks: LandmarkSets, registry: MaximiserRegistry, cfg: Config,
                 stats: Optional[BuildStats] = None):
        self.pg = pg
        self.spts = spts
        self.sfi = sfi
        self.landmarks = landmarks
        self.registry = registry
        self.config = cfg
        self.stats = stats
        self.engine = QueryEngine(pg, spts, sfi, landmarks, registry, cfg)

    @property
    def graph(self) -> Graph:
        return self.pg.graph

    def faults(self, edges: Iterable[Union[int, tuple]]) -> FaultSet:
        """Fault set from edge ids or (u, v) pairs"""
        ids = []
        for e in edges:
            if isinstance(e, tuple):
                ids.append(self.graph.edge_id(*e))
            else:
                ids.append(int(e))
        return FaultSet.of(self.graph, ids)

    def query(self, s: int, t: int, F: Union[FaultSet, Iterable] = (), f: int = 2,
              instrument: bool = False) -> QueryOutcome:
        if not isinstance(F, FaultSet):
            F = self.faults(F)
        return self.engine.query(s, t, F, f, instrument)

    def distance(self, s: int, t: int, F: Union[FaultSet, Iterable] = ()) -> Union[int, float]:
        return self.query(s, t, F).distance


def _max_scale(n: int) -> int:
    n = max(n, 2)
    scale = 1
    while (scale * n) * n ** 4 < 2 ** MAX_WEIGHT_BITS:
        scale *= n
    return scale


def _tree_from(pg: PerturbedGraph, s: int) -> ShortestPathTree:
    return grow_tree(pg, s)


def build_trees(pg: PerturbedGraph, jobs: int = 1) -> List[ShortestPathTree]:
    return fan_out(_tree_from, range(pg.n), pg, jobs)


def assemble(pg: PerturbedGraph, cfg: Config, landmarks: Optional[LandmarkSets] = None,
             build_registry: bool = True, phase_seconds: Optional[Dict[str, float]] = None):
    """Trees, single-fault index, landmarks and (optionally) the registry for a fixed perturbation"""
    timings = phase_seconds if phase_seconds is not None else {}

    started = time.perf_counter()
    spts = build_trees(pg, cfg.jobs)
    timings['trees'] = round(time.perf_counter() - started, 3)

    started = time.perf_counter()
    sfi = build_single_fault(pg, spts, cfg.jobs)
    timings['single_fault'] = round(time.perf_counter() - started, 3)

    if landmarks is None:
        landmarks = sample_landmarks(pg.n, cfg.landmark_c, pg.seed)

    evaluator = KeyEvaluator(pg, spts, sfi, cfg.epsilon, landmarks, cfg.dclose_constant)
    registry = MaximiserRegistry(evaluator, cfg.mem_cap_entries)
    if build_registry:
        started = time.perf_counter()
        registry.build(cfg.jobs)
        timings['registry'] = round(time.perf_counter() - started, 3)
    return spts, sfi, landmarks, registry


def build_oracle(graph: Graph, cfg: Optional[Config] = None) -> DistanceOracle:
    """Full build; on a shortest-path tie the seed moves on and the perturbation range widens by n"""
    cfg = cfg or default_config
    scale = cfg.perturbation_scale
    ceiling = _max_scale(graph.n)
    last_error: Optional[TieDetected] = None

    for attempt in range(max(cfg.max_tie_retries, 1)):
        seed = cfg.seed + attempt
        timings: Dict[str, float] = {}
        try:
            logger.info(f"Building oracle for {graph} (seed={seed}, scale={scale})")
            pg = perturb(graph, seed, scale)
            spts, sfi, landmarks, registry = assemble(pg, cfg, phase_seconds=timings)
        except TieDetected as e:
            last_error = e
            logger.warning(f"Attempt {attempt + 1}: {e}; resampling")
            scale = min(scale * max(graph.n, 2), ceiling)
            continue

        stats = BuildStats(
            n=graph.n, m=graph.m, seed=seed, scale=scale, attempts=attempt + 1,
            entries=len(registry), variant_counts=registry.variant_counts(),
            family_counts=dict(registry.counters), phase_seconds=timings,
        )
        logger.info(f"Oracle ready: {stats.entries} entries in {stats.wall_seconds}s")
        return DistanceOracle(pg, spts, sfi, landmarks, registry, cfg, stats)

    raise TieDetected(last_error.vertex if last_error else -1)
