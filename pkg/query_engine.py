"""
Two-fault query algorithm.

Query(s, t, F, f) returns |st| when st avoids F, the single-fault answer when
only one fault matters, and otherwise min(L, Query(s, x, f-1) + Query(x, t, f-1))
over the vertices x of the hit set H. L and H come from maximiser probes issued
by four flows: source side primary and secondary, and the same two flows on the
reversed query. A probe's length enters L only after checking that the real
fault set satisfies the probed key.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Set, Tuple, Union

from graph_core import INF, FaultSet, PerturbedGraph, ShortestPathTree, is_clean, prefix_intact
from landmarks import LandmarkMiss, LandmarkSets, landmark_toward_source, walk_limit
from maximisers import MaxEntry, MaxKey, MaximiserRegistry, MissingKey, PairRule, SideSpec
from single_fault import ClassificationMismatch, FaultOffsets, SingleFaultIndex

logger = logging.getLogger(__name__)

Distance = Union[int, float]


class CaseTag(Enum):
    NO_FAULT_ON_PRIMARY = 0
    SINGLE_EFFECTIVE = 1
    BOTH_PRIMARY = 2
    PRIMARY_PLUS_SECONDARY = 3


class SideState(NamedTuple):
    kind: int  # 0 nothing, 1 D-close, 2 clean
    vertex: int = -1


NOTHING = SideState(0)
DCLOSE = SideState(1)

HARD_CASES = (CaseTag.BOTH_PRIMARY, CaseTag.PRIMARY_PLUS_SECONDARY)

# each hit set comes from four flows, each issuing maximisers with up to four endpoints
HITSET_FLOWS = 4
ENTRY_ENDPOINTS = 4


def clean_state(p: int) -> SideState:
    return SideState(2, p)


def pow2_floor(x: Distance) -> int:
    """2^floor(log2 x), or 1 below 1"""
    x = int(x)
    return 1 << (x.bit_length() - 1) if x >= 1 else 1


def log2_floor(x: Distance) -> int:
    x = int(x)
    return x.bit_length() - 1 if x >= 1 else 0


@dataclass
class QueryOutcome:
    distance: Distance
    certified: bool
    probes: int
    trace: List[Tuple] = field(default_factory=list)
    fallbacks: Dict[str, int] = field(default_factory=dict)
    context: Optional["QueryContext"] = None


@dataclass
class QueryContext:
    F: FaultSet
    instrument: bool = False
    memo: Dict[Tuple, Distance] = field(default_factory=dict)
    active: Set[Tuple] = field(default_factory=set)
    probes: int = 0
    lookup_ceiling: Optional[int] = None
    fallbacks: Counter = field(default_factory=Counter)
    trace: List[Tuple] = field(default_factory=list)
    # (s, t, value, kind) for every value folded into an answer
    candidates: List[Tuple[int, int, Distance, str]] = field(default_factory=list)
    # (s, t, key, entry) for every length admitted into L
    admissions: List[Tuple[int, int, MaxKey, MaxEntry]] = field(default_factory=list)


@dataclass
class FlowResult:
    L: Distance = INF
    H: Set[int] = field(default_factory=set)
    anchored: List[Distance] = field(default_factory=list)
    probes: int = 0


class FlowBudget:
    def __init__(self, probes: int):
        self.remaining = probes
        self.reroutes = 0


@dataclass
class Frame:
    """One direction of a hit-set computation: the flows run from `s` toward `t`"""
    s: int
    t: int
    F: FaultSet
    tag: CaseTag
    offsets: FaultOffsets
    f: int
    state_s: SideState
    state_t: SideState
    result: FlowResult
    clean: Dict[int, int]

    @property
    def rule(self) -> PairRule:
        if self.tag == CaseTag.BOTH_PRIMARY:
            return PairRule.BOTH_PRIMARY
        return PairRule.PRIMARY_SECONDARY

    @property
    def t_offset(self) -> Distance:
        if self.tag == CaseTag.BOTH_PRIMARY:
            return min(self.offsets.te1, self.offsets.te2)
        return self.offsets.te1

    def t_prim(self) -> SideSpec:
        if self.state_t.kind == 1:
            return SideSpec.prim(max(1, int(self.t_offset)))
        return SideSpec.prim(pow2_floor(self.t_offset))

    def t_spec(self) -> SideSpec:
        q = self.clean.get(self.t)
        if q is not None:
            return SideSpec.clean_at(q)
        if self.state_t.kind == 2:
            return SideSpec.clean_at(self.state_t.vertex)
        return self.t_prim()


class QueryEngine:
    """Answers |st - F| for |F| <= 2 from the precomputed indices"""

    def __init__(self, pg: PerturbedGraph, spts: List[ShortestPathTree], sfi: SingleFaultIndex,
                 landmarks: LandmarkSets, registry: MaximiserRegistry, config):
        self.pg = pg
        self.spts = spts
        self.sfi = sfi
        self.landmarks = landmarks
        self.registry = registry
        self.evaluator = registry.evaluator
        self.config = config

    # classification

    def classify(self, s: int, t: int, F: FaultSet) -> CaseTag:
        on = [e for e in F.edges if self.sfi.on_primary(s, t, e)]
        if not on:
            return CaseTag.NO_FAULT_ON_PRIMARY
        if len(F) == 1:
            return CaseTag.SINGLE_EFFECTIVE
        for e in on:
            if self.sfi.dist_1f(s, t, e) != INF and not self.sfi.edge_on_secondary(s, t, e, F.other(e)):
                return CaseTag.SINGLE_EFFECTIVE
        if len(on) == 2:
            return CaseTag.BOTH_PRIMARY
        # the only primary fault disconnects s from t on its own
        if self.sfi.dist_1f(s, t, on[0]) == INF:
            return CaseTag.SINGLE_EFFECTIVE
        return CaseTag.PRIMARY_PLUS_SECONDARY

    def _single_answer(self, s: int, t: int, F: FaultSet) -> Distance:
        on = [e for e in F.edges if self.sfi.on_primary(s, t, e)]
        other = {e: F.other(e) for e in on}
        for e in on:
            if other[e] is None or not self.sfi.edge_on_secondary(s, t, e, other[e]):
                return self.sfi.dist_1f(s, t, e)
        return INF

    # public API

    def query(self, s: int, t: int, F: FaultSet, f: int = 2, instrument: bool = False) -> QueryOutcome:
        n = self.pg.n
        if not (0 <= s < n and 0 <= t < n):
            raise ValueError(f"vertex out of range [0, {n})")
        ctx = QueryContext(F, instrument=instrument, lookup_ceiling=self.lookup_ceiling())
        answer = self._query(s, t, f, NOTHING, NOTHING, ctx)

        if self.config.hardened and self.config.audit_answers and s != t:
            tag = self.classify(s, t, F)
            if tag in HARD_CASES:
                exact = self.sfi.cut_distance(s, t, F)
                if exact != answer:
                    logger.debug(f"Audit corrected query ({s}, {t}, {F.edges}): {answer} -> {exact}")
                    ctx.fallbacks['audit'] += 1
                    answer = exact

        return QueryOutcome(
            distance=answer,
            certified=sum(ctx.fallbacks.values()) == 0,
            probes=ctx.probes,
            trace=ctx.trace if instrument else [],
            fallbacks=dict(ctx.fallbacks),
            context=ctx if instrument else None,
        )

    def lookup_ceiling(self) -> int:
        """Lookups one top-level query may issue: a hit set at f = 2 plus two f = 1 hit sets per vertex of it"""
        hitset_probes = HITSET_FLOWS * self.config.probes_per_flow
        hitset_vertices = ENTRY_ENDPOINTS * hitset_probes
        return hitset_probes * (1 + 2 * hitset_vertices)

    def hitset(self, s: int, t: int, F: FaultSet, f: int = 2) -> Tuple[Distance, Set[int]]:
        ctx = QueryContext(F)
        result = self._hitset(s, t, f, NOTHING, NOTHING, ctx)
        return result.L, result.H

    def flow_dclose_primary(self, s: int, t: int, F: FaultSet, f: int = 2) -> FlowResult:
        ctx = QueryContext(F)
        frame = self._frame(s, t, ctx, f, NOTHING, NOTHING, FlowResult(), {})
        self._flow_dclose_primary(frame, FlowBudget(self.config.probes_per_flow), ctx)
        return frame.result

    def flow_dclose_secondary(self, s: int, t: int, F: FaultSet, f: int = 2) -> FlowResult:
        ctx = QueryContext(F)
        frame = self._frame(s, t, ctx, f, NOTHING, NOTHING, FlowResult(), {})
        if frame.tag == CaseTag.PRIMARY_PLUS_SECONDARY:
            self._flow_dclose_secondary(frame, FlowBudget(self.config.probes_per_flow), ctx)
        return frame.result

    def flow_clean_and_intermediate(self, s: int, t: int, F: FaultSet, state_s: SideState,
                                    state_t: SideState = NOTHING, f: int = 2) -> FlowResult:
        ctx = QueryContext(F)
        frame = self._frame(s, t, ctx, f, state_s, state_t, FlowResult(), {})
        self._flow_clean_and_intermediate(frame, FlowBudget(self.config.probes_per_flow), ctx)
        return frame.result

    # recursion

    def _query(self, s: int, t: int, f: int, state_s: SideState, state_t: SideState,
               ctx: QueryContext) -> Distance:
        if s == t:
            return 0
        memo_key = (s, t, f, state_s, state_t)
        if memo_key in ctx.memo:
            return ctx.memo[memo_key]
        if memo_key in ctx.active:
            return INF
        ts = self.spts[s]
        if not ts.reachable(t):
            return INF

        F = ctx.F
        tag = self.classify(s, t, F)
        if ctx.instrument:
            ctx.trace.append(('classify', s, t, f, tag.name))
        if tag == CaseTag.NO_FAULT_ON_PRIMARY:
            value = ts.hop(t)
        elif tag == CaseTag.SINGLE_EFFECTIVE:
            value = self._single_answer(s, t, F)
        elif any(self.sfi.dist_1f(s, t, e) == INF for e in F.edges if self.sfi.on_primary(s, t, e)):
            value = INF
        elif f == 0:
            value = INF
        else:
            ctx.active.add(memo_key)
            try:
                result = self._hitset(s, t, f, state_s, state_t, ctx)
                value = min([result.L] + result.anchored)
                for x in sorted(result.H):
                    if x in (s, t):
                        continue
                    left = self._query(s, x, f - 1, NOTHING, NOTHING, ctx)
                    if left >= value:
                        continue
                    total = left + self._query(x, t, f - 1, NOTHING, NOTHING, ctx)
                    self._fold(ctx, s, t, total, 'split')
                    value = min(value, total)
            finally:
                ctx.active.discard(memo_key)
        ctx.memo[memo_key] = value
        return value

    def _fold(self, ctx: QueryContext, s: int, t: int, value: Distance, kind: str):
        if ctx.instrument and value != INF:
            ctx.candidates.append((s, t, value, kind))

    def _frame(self, s: int, t: int, ctx: QueryContext, f: int, state_s: SideState,
               state_t: SideState, result: FlowResult, clean: Dict[int, int]) -> Frame:
        F = ctx.F
        tag = self.classify(s, t, F)
        if tag not in HARD_CASES:
            raise ClassificationMismatch(f"query ({s}, {t}, {F.edges}) has no two-fault flow ({tag.name})")
        oriented = self.sfi.orient_faults(s, t, F)
        offsets = self.sfi.fault_offsets(s, t, oriented)
        return Frame(s, t, oriented, tag, offsets, f, state_s, state_t, result, clean)

    def _hitset(self, s: int, t: int, f: int, state_s: SideState, state_t: SideState,
                ctx: QueryContext) -> FlowResult:
        result = FlowResult()
        clean: Dict[int, int] = {}
        try:
            frames = [
                self._frame(s, t, ctx, f, state_s, state_t, result, clean),
                self._frame(t, s, ctx, f, state_t, state_s, result, clean),
            ]
        except ClassificationMismatch as e:
            if not self.config.hardened:
                raise
            logger.warning(f"Hit set skipped: {e}")
            ctx.fallbacks['classification'] += 1
            return result
        for frame in frames:
            if frame.state_s.kind == 0:
                self._flow_dclose_primary(frame, FlowBudget(self.config.probes_per_flow), ctx)
                if frame.tag == CaseTag.PRIMARY_PLUS_SECONDARY:
                    self._flow_dclose_secondary(frame, FlowBudget(self.config.probes_per_flow), ctx)
            else:
                self._flow_clean_and_intermediate(frame, FlowBudget(self.config.probes_per_flow), ctx)
        return result

    # probes and walks

    def _probe(self, frame: Frame, key: MaxKey, budget: FlowBudget, ctx: QueryContext,
               prefix: Distance = 0) -> Optional[MaxEntry]:
        """Look up `key`; `prefix` is the F-avoiding hop length from frame.s to key.s"""
        if budget.remaining <= 0:
            return None
        if ctx.lookup_ceiling is not None and ctx.probes >= ctx.lookup_ceiling:
            if ctx.fallbacks['lookup_ceiling'] == 0:
                logger.debug(f"Lookup ceiling {ctx.lookup_ceiling} reached for faults {ctx.F.edges}")
            ctx.fallbacks['lookup_ceiling'] += 1
            return None
        budget.remaining -= 1
        ctx.probes += 1
        frame.result.probes += 1
        entry = self.registry.lookup(key)
        satisfied = self.evaluator.satisfies(key, ctx.F.edges)
        if entry is None and satisfied:
            if not self.config.hardened:
                raise MissingKey(key)
            ctx.fallbacks['missing_key'] += 1
            entry = self.registry.compute_on_demand(key)
        if entry is None:
            return None
        if satisfied:
            value = prefix + entry.length
            frame.result.L = min(frame.result.L, value)
            self._fold(ctx, frame.s, frame.t, value, 'maximiser')
            if ctx.instrument:
                ctx.admissions.append((key.s, key.t, key, entry))
        for e in entry.pair:
            frame.result.H.update(self.pg.graph.endpoints(e))
        return entry

    def _walk(self, tree: ShortestPathTree, x: int, level: int, ctx: QueryContext) -> int:
        """Nearest level-`level` landmark from x toward the root, at most 2^level hops away"""
        budget = 1 << level
        y = landmark_toward_source(tree, self.landmarks, x, level, budget)
        if y is None:
            if not self.config.hardened:
                raise LandmarkMiss(x, level, budget)
            ctx.fallbacks['landmark'] += 1
            y = walk_limit(tree, x, budget)
        return y

    def _anchor(self, frame: Frame, prefix: Distance, y: int, state: SideState, budget: FlowBudget,
                ctx: QueryContext):
        """Candidate prefix + Query(y, t); the caller guarantees the prefix path avoids F.

        Each flow may move to at most max_reroutes fresh anchors whose query
        lands in a different hard case; the rest are dropped and counted.
        """
        if y == frame.s and state == frame.state_s:
            return
        fresh = (y, frame.t, frame.f, state, frame.state_t) not in ctx.memo
        if fresh and y not in (frame.s, frame.t):
            tag = self.classify(y, frame.t, ctx.F)
            if tag != frame.tag and tag in HARD_CASES:
                budget.reroutes += 1
                if budget.reroutes > self.config.max_reroutes:
                    ctx.fallbacks['reroute'] += 1
                    return
        rest = self._query(y, frame.t, frame.f, state, frame.state_t, ctx)
        total = prefix + rest
        self._fold(ctx, frame.s, frame.t, total, 'anchored')
        frame.result.anchored.append(total)

    def _endpoints(self, entry: MaxEntry) -> List[int]:
        seen = []
        for e in entry.pair:
            for x in self.pg.graph.endpoints(e):
                if x not in seen:
                    seen.append(x)
        return seen

    def _adopt_clean(self, frame: Frame, x: int, budget: FlowBudget, ctx: QueryContext) -> bool:
        """Adopt x as the source-side clean vertex and issue the clean maximiser"""
        if frame.s in frame.clean or x == frame.s:
            return False
        if not is_clean(self.spts[frame.s], x, ctx.F):
            return False
        frame.clean[frame.s] = x
        if ctx.instrument:
            ctx.trace.append(('clean', frame.s, frame.t, x))
        self._probe(frame, MaxKey.make(frame.s, frame.t, SideSpec.clean_at(x), frame.t_spec(), frame.rule),
                    budget, ctx)
        return True

    # flows

    def _flow_dclose_primary(self, frame: Frame, budget: FlowBudget, ctx: QueryContext):
        s, t, F = frame.s, frame.t, frame.F
        ts = self.spts[s]
        se1 = frame.offsets.se1
        key = MaxKey.make(s, t, SideSpec.prim(pow2_floor(se1)), frame.t_spec(), frame.rule)
        entry = self._probe(frame, key, budget, ctx)
        if entry is None:
            return
        level = log2_floor(se1)
        for x in self._endpoints(entry):
            if x == s:
                continue
            if not ts.is_ancestor(x, t):
                self._adopt_clean(frame, x, budget, ctx)
            elif prefix_intact(ts, x, ctx.F):
                y = self._walk(ts, x, level, ctx)
                if ts.path_avoids(self.pg, y, ctx.F):
                    self._anchor(frame, ts.hop(y), y, DCLOSE, budget, ctx)

    def _flow_dclose_secondary(self, frame: Frame, budget: FlowBudget, ctx: QueryContext):
        s, t, F = frame.s, frame.t, frame.F
        ts = self.spts[s]
        t1 = self.sfi.tree(s, F.e1)
        se1, se2 = frame.offsets.se1, frame.offsets.se2

        key = MaxKey.make(s, t, SideSpec.both(pow2_floor(min(se1, se2))), frame.t_spec(), frame.rule)
        entry = self._probe(frame, key, budget, ctx)
        if entry is not None:
            for x in self._endpoints(entry):
                if x == s:
                    continue
                if t1.is_ancestor(x, t) and prefix_intact(t1, x, ctx.F):
                    y = self._walk(t1, x, log2_floor(se2), ctx)
                    if t1.path_avoids(self.pg, y, ctx.F):
                        self._anchor(frame, t1.hop(y), y, DCLOSE, budget, ctx)
                elif ts.is_ancestor(x, t):
                    if prefix_intact(ts, x, ctx.F):
                        y = self._walk(ts, x, log2_floor(se1), ctx)
                        if ts.path_avoids(self.pg, y, ctx.F):
                            self._anchor(frame, ts.hop(y), y, DCLOSE, budget, ctx)
                else:
                    self._adopt_clean(frame, x, budget, ctx)

        if se1 < se2:
            self._secondary_chain(frame, budget, ctx)

    def _secondary_chain(self, frame: Frame, budget: FlowBudget, ctx: QueryContext):
        """Close vertex y near e1, then p from the maximiser at y, then the geometric maximiser at p"""
        s, t, F = frame.s, frame.t, frame.F
        ts = self.spts[s]
        y = self._walk(ts, F.a, log2_floor(frame.offsets.se1), ctx)
        if not ts.path_avoids(self.pg, y, ctx.F) or y == t:
            return
        ya = max(1, int(ts.hop(F.a) - ts.hop(y)))
        key5 = MaxKey.make(y, t, SideSpec.both(ya), frame.t_prim(), PairRule.PRIMARY_SECONDARY)
        entry5 = self._probe(frame, key5, budget, ctx, prefix=ts.hop(y))
        if entry5 is None:
            return
        for p in self._endpoints(entry5):
            if p in (s, t) or not ts.path_avoids(self.pg, p, ctx.F):
                continue
            if ctx.instrument:
                ctx.trace.append(('chain', s, t, y, p, F.a))
            # p stays unregistered as a clean vertex
            self._anchor(frame, ts.hop(p), p, NOTHING, budget, ctx)
            if self.classify(p, t, ctx.F) != CaseTag.PRIMARY_PLUS_SECONDARY:
                continue
            fp = self.sfi.orient_faults(p, t, ctx.F)
            off = self.sfi.fault_offsets(p, t, fp)
            i = self.evaluator.geo_exponent_within(off.se1)
            key6 = MaxKey.make(p, t, SideSpec.geometric(i, pow2_floor(off.se2)),
                               SideSpec.prim(pow2_floor(off.te1)), PairRule.PRIMARY_SECONDARY)
            if ctx.instrument:
                ctx.trace.append(('geometric', s, t, p, i, fp.e1, fp.a, fp.e2, fp.c))
            entry6 = self._probe(frame, key6, budget, ctx, prefix=ts.hop(p))
            if entry6 is None:
                continue
            tp1 = self.sfi.tree(p, fp.e1)
            for z in self._endpoints(entry6):
                if z == p or not tp1.is_ancestor(z, t) or not prefix_intact(tp1, z, ctx.F):
                    continue
                y2 = self._walk(tp1, z, log2_floor(off.se2), ctx)
                if tp1.path_avoids(self.pg, y2, ctx.F):
                    self._anchor(frame, ts.hop(p) + tp1.hop(y2), y2, DCLOSE, budget, ctx)

    def _flow_clean_and_intermediate(self, frame: Frame, budget: FlowBudget, ctx: QueryContext):
        s, t = frame.s, frame.t
        if frame.state_s.kind == 2:
            p = frame.state_s.vertex
            frame.clean.setdefault(s, p)
            self._probe(frame, MaxKey.make(s, t, SideSpec.clean_at(p), frame.t_spec(), frame.rule), budget, ctx)
            return

        ts = self.spts[s]
        se1, se2 = frame.offsets.se1, frame.offsets.se2
        keys = [MaxKey.make(s, t, SideSpec.prim(max(1, int(se1))), frame.t_spec(), frame.rule)]
        if frame.tag == CaseTag.PRIMARY_PLUS_SECONDARY:
            i = self.evaluator.geo_exponent_within(se1)
            keys.append(MaxKey.make(s, t, SideSpec.geometric(i, max(1, int(se2))), frame.t_spec(), frame.rule))
        for key in keys:
            entry = self._probe(frame, key, budget, ctx)
            if entry is None:
                continue
            for x in self._endpoints(entry):
                if x != s and not ts.is_ancestor(x, t):
                    self._adopt_clean(frame, x, budget, ctx)
