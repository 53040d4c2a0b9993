"""
Maximiser registry: for every key, the eligible fault pair with the longest
replacement path among the pairs satisfying the key's side conditions.

Keys carry one condition per side. On the source side:
  PRIMARY_INTACT(d)   the first min(d, |st|) hops of st hold no fault endpoint inside
  BOTH_INTACT(d)      the same prefix intact on st and on the secondary path st - f1
  GEOMETRIC(i, d)     primary prefix floor((1+eps)^i) and secondary prefix d intact
  CLEAN(p)            p is s-clean (prefix sp and subtree T_s(p) intact)
The destination side is mirrored along T_t and carries PRIMARY_INTACT or
CLEAN only. Secondary conditions near t are covered by the flows of the
reversed query (t, s), whose keys put t on the source side; st and ts share
the same primary and secondary paths, so those keys select the same pairs.
"""
import logging
import math
import threading
from collections import Counter, defaultdict
from enum import IntEnum
from itertools import combinations
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np

from graph_core import (
    INF, W_INF, PerturbedGraph, ShortestPathTree, clean_mask, edge_on_path,
)
from landmarks import LandmarkSets
from single_fault import SingleFaultIndex
from workers import fan_out

logger = logging.getLogger(__name__)

# Offset of "no fault endpoint" along a path; larger than any prefix length.
NO_HIT = np.int64(1 << 40)
# Replacement length of a disconnecting pair inside record tables.
LEN_INF = np.int64(1 << 40)

TABLE_CACHE_BYTES = 256 * 2 ** 20
# Rows scanned per step when looking for the first record satisfying a key.
ARGMAX_CHUNK = 64
# Reach of a side when no landmark hierarchy bounds it.
UNBOUNDED = 1 << 62


class MissingKey(Exception):
    """A key the fault set satisfies is absent from the registry"""

    def __init__(self, key):
        super().__init__(f"missing maximiser key {tuple(key)}")
        self.key = key


class MemoryCapExceeded(Exception):
    """Registry grew past the configured entry cap"""

    def __init__(self, report: Dict):
        super().__init__(f"registry exceeded {report['cap']} entries: {report}")
        self.report = report


class Variant(IntEnum):
    PRIMARY_INTACT = 0
    BOTH_INTACT = 1
    GEOMETRIC = 2
    CLEAN = 3


class PairRule(IntEnum):
    PRIMARY_SECONDARY = 0
    BOTH_PRIMARY = 1


class SideSpec(NamedTuple):
    variant: Variant
    dist: int = -1
    geo: int = -1
    clean: int = -1

    @classmethod
    def prim(cls, d: int) -> 'SideSpec':
        return cls(Variant.PRIMARY_INTACT, int(d))

    @classmethod
    def both(cls, d: int) -> 'SideSpec':
        return cls(Variant.BOTH_INTACT, int(d))

    @classmethod
    def geometric(cls, i: int, d: int) -> 'SideSpec':
        return cls(Variant.GEOMETRIC, int(d), int(i))

    @classmethod
    def clean_at(cls, p: int) -> 'SideSpec':
        return cls(Variant.CLEAN, clean=int(p))


class MaxKey(NamedTuple):
    s: int
    t: int
    variant_s: int
    dist0: int
    geo_i: int
    clean0: int
    variant_t: int
    dist1: int
    geo_j: int
    clean1: int
    pair_rule: int

    @classmethod
    def make(cls, s: int, t: int, side_s: SideSpec, side_t: SideSpec,
             rule: PairRule = PairRule.PRIMARY_SECONDARY) -> 'MaxKey':
        return cls(int(s), int(t), int(side_s.variant), side_s.dist, side_s.geo, side_s.clean,
                   int(side_t.variant), side_t.dist, side_t.geo, side_t.clean, int(rule))

    @property
    def side_s(self) -> SideSpec:
        return SideSpec(Variant(self.variant_s), self.dist0, self.geo_i, self.clean0)

    @property
    def side_t(self) -> SideSpec:
        return SideSpec(Variant(self.variant_t), self.dist1, self.geo_j, self.clean1)

    @property
    def rule(self) -> PairRule:
        return PairRule(self.pair_rule)


class MaxEntry(NamedTuple):
    pair: Tuple[int, int]
    length: Union[int, float]


class RecordTable:
    """Ordered fault pairs from one source with per-target lengths and side offsets"""

    def __init__(self, s: int, targets: np.ndarray, f1, f2, rule, endpoints, length,
                 eligible, kp_s, kp_t, ks_s, ks_t, k2):
        self.s = s
        self.targets = targets
        self.column = {int(t): j for j, t in enumerate(targets)}
        self.f1 = f1
        self.f2 = f2
        self.rule = rule
        self.pair_a = np.minimum(f1, f2)
        self.pair_b = np.maximum(f1, f2)
        self.endpoints = endpoints
        self.length = length
        self.eligible = eligible
        self.kp_s = kp_s
        self.kp_t = kp_t
        self.ks_s = ks_s
        self.ks_t = ks_t
        self.k2 = k2

    def __len__(self):
        return len(self.f1)

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in (self.length, self.eligible, self.kp_s, self.kp_t,
                                      self.ks_s, self.ks_t, self.k2))


class KeyEvaluator:
    """Key normalisation and the side predicates, shared by the build and the query-time guard.

    A side anchored at v keeps every budget up to reach(v) = dclose_constant
    * 2^(highest landmark level holding v), powers of two beyond that, and
    the clamp limit itself. Without landmarks every budget is kept.
    """

    def __init__(self, pg: PerturbedGraph, spts: Sequence[ShortestPathTree],
                 sfi: SingleFaultIndex, epsilon: float, landmarks: Optional[LandmarkSets] = None,
                 dclose_constant: int = 4):
        self.pg = pg
        self.spts = spts
        self.sfi = sfi
        self.epsilon = epsilon
        self.landmarks = landmarks
        self.dclose_constant = dclose_constant
        self._reach = self._reaches(pg.n, landmarks, dclose_constant)
        self._spans: Dict[Tuple[int, int], Tuple[int, int]] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _reaches(n: int, landmarks: Optional[LandmarkSets], constant: int) -> List[int]:
        if landmarks is None:
            return [UNBOUNDED] * n
        tops = np.full(n, -1, dtype=np.int64)
        for level, row in enumerate(landmarks.levels):
            tops[row] = level
        return [constant << int(top) if top >= 0 else 0 for top in tops]

    # budgets

    def reach(self, v: int) -> int:
        return self._reach[v]

    def budget(self, v: int, d: int, limit: int) -> int:
        """Canonical budget for d on a side anchored at v"""
        d = min(max(int(d), 1), limit)
        if d <= self._reach[v] or d == limit:
            return d
        return 1 << (d.bit_length() - 1)

    def budgets(self, v: int, limit: int) -> List[int]:
        """Every canonical budget on a side anchored at v, clamped to `limit`"""
        if limit < 1:
            return []
        kept = set(range(1, min(self._reach[v], limit) + 1))
        d = 1
        while d < limit:
            kept.add(d)
            d <<= 1
        kept.add(limit)
        return sorted(kept)

    # spans and exponents

    def span(self, s: int, t: int) -> Tuple[int, int]:
        """(|st|, largest finite |st - e| over e on st); the cap is |st| when none is finite"""
        cached = self._spans.get((s, t))
        if cached is not None:
            return cached
        ts = self.spts[s]
        k = ts.hop(t)
        if k == INF:
            result = (INF, INF)
        else:
            cap = k
            for e in ts.path_edges(t):
                alt = self.sfi.dist_1f(s, t, e)
                if alt != INF:
                    cap = max(cap, alt)
            result = (int(k), int(cap))
        with self._lock:
            self._spans[(s, t)] = result
        return result

    def geo_length(self, i: int, k: int) -> int:
        return min(math.floor((1 + self.epsilon) ** max(i, 0) + 1e-9), k)

    def geo_exponents(self, k: int) -> List[int]:
        """Smallest exponent for every distinct clamped prefix length"""
        exps, seen, i = [], set(), 0
        while True:
            length = self.geo_length(i, k)
            if length not in seen:
                seen.add(length)
                exps.append(i)
            if length >= k:
                return exps
            i += 1

    def geo_exponent_within(self, length: Union[int, float]) -> int:
        """Largest i with (1+eps)^i <= length (0 when length < 1)"""
        if length == INF:
            raise ValueError("geometric prefix needs a finite length")
        i = 0
        while (1 + self.epsilon) ** (i + 1) <= length + 1e-9:
            i += 1
        return i

    # normalisation

    def _normalise_side(self, spec: SideSpec, v: int, k: int, cap: int) -> SideSpec:
        variant = Variant(spec.variant)
        if variant == Variant.PRIMARY_INTACT:
            return SideSpec.prim(self.budget(v, spec.dist, k))
        if variant == Variant.BOTH_INTACT:
            return SideSpec.both(self.budget(v, spec.dist, cap))
        if variant == Variant.GEOMETRIC:
            length = self.geo_length(spec.geo, k)
            i = 0
            while self.geo_length(i, k) != length:
                i += 1
            return SideSpec.geometric(i, self.budget(v, spec.dist, cap))
        return SideSpec.clean_at(spec.clean)

    def normalise(self, key: MaxKey) -> MaxKey:
        k, cap = self.span(key.s, key.t)
        if k == INF or k == 0:
            return key
        return MaxKey.make(key.s, key.t,
                           self._normalise_side(key.side_s, key.s, k, cap),
                           self._normalise_side(key.side_t, key.t, k, cap),
                           key.rule)

    def source_specs(self, s: int, t: int, rule: PairRule) -> List[SideSpec]:
        """Group-1 source-side conditions for (s, t)"""
        k, cap = self.span(s, t)
        specs = [SideSpec.prim(d) for d in self.budgets(s, k)]
        if rule == PairRule.BOTH_PRIMARY:
            return specs
        secondary = self.budgets(s, cap)
        specs.extend(SideSpec.both(d) for d in secondary)
        for i in self.geo_exponents(k):
            specs.extend(SideSpec.geometric(i, d) for d in secondary)
        return specs

    def target_specs(self, s: int, t: int) -> List[SideSpec]:
        k, _ = self.span(s, t)
        return [SideSpec.prim(d) for d in self.budgets(t, k)]

    # record tables

    def table(self, s: int, orderings: Sequence[Tuple[int, int, PairRule]],
              targets: Optional[np.ndarray] = None, with_lengths: bool = True) -> RecordTable:
        """Per-ordering eligibility and fault offsets over `targets` (all vertices by default)"""
        pg, ts = self.pg, self.spts[s]
        targets = np.arange(pg.n, dtype=np.int64) if targets is None else np.asarray(targets, dtype=np.int64)
        R, C = len(orderings), len(targets)
        f1 = np.array([o[0] for o in orderings], dtype=np.int64)
        f2 = np.array([o[1] for o in orderings], dtype=np.int64)
        rule = np.array([int(o[2]) for o in orderings], dtype=np.int8)
        endpoints = np.zeros((R, 4), dtype=np.int64)
        length = np.full((R, C), LEN_INF, dtype=np.int64)
        eligible = np.zeros((R, C), dtype=bool)
        kp_s = np.full((R, C), NO_HIT, dtype=np.int64)
        kp_t = np.full((R, C), NO_HIT, dtype=np.int64)
        ks_s = np.full((R, C), NO_HIT, dtype=np.int64)
        ks_t = np.full((R, C), NO_HIT, dtype=np.int64)
        k2 = np.full((R, C), W_INF, dtype=np.int64)

        k = ts.dist_h[targets]
        k_valid = ts.dist_w[targets] < W_INF
        dist_cache: Dict[Tuple[int, int], np.ndarray] = {}

        for r, (e1, e2, rl) in enumerate(orderings):
            z = list(pg.graph.endpoints(e1)) + list(pg.graph.endpoints(e2))
            endpoints[r] = z
            zs = np.array(sorted(set(z)), dtype=np.int64)

            on = ts.ancestor_matrix(zs, targets)
            pos = ts.dist_h[zs][:, None]
            inside = on & (pos >= 1) & (pos <= k[None, :] - 1) & k_valid[None, :]
            kp_s[r] = np.where(inside, pos, NO_HIT).min(axis=0)
            kp_t[r] = np.where(inside, k[None, :] - pos, NO_HIT).min(axis=0)

            low1 = ts.lower_endpoint(pg, e1)
            if rl == PairRule.BOTH_PRIMARY:
                low2 = ts.lower_endpoint(pg, e2)
                if low1 is not None and low2 is not None:
                    eligible[r] = (ts.ancestor_matrix([low1, low2], targets).all(axis=0)) & k_valid
            else:
                t1 = self.sfi.tree(s, e1)
                low2 = t1.lower_endpoint(pg, e2)
                if low1 is not None and low2 is not None:
                    eligible[r] = (ts.ancestor_matrix([low1], targets)[0]
                                   & t1.ancestor_matrix([low2], targets)[0])
                kk = np.where(t1.dist_w[targets] < W_INF, t1.dist_h[targets], W_INF)
                k2[r] = kk
                on1 = t1.ancestor_matrix(zs, targets)
                pos1 = t1.dist_h[zs][:, None]
                inside1 = on1 & (pos1 >= 1) & (pos1 <= kk[None, :] - 1)
                ks_s[r] = np.where(inside1, pos1, NO_HIT).min(axis=0)
                ks_t[r] = np.where(inside1, kk[None, :] - pos1, NO_HIT).min(axis=0)

            if with_lengths:
                pair = (min(e1, e2), max(e1, e2))
                vec = dist_cache.get(pair)
                if vec is None:
                    hops = self.sfi.pair_hops(s, e1, e2)
                    vec = np.where(hops < W_INF, hops, LEN_INF)
                    dist_cache[pair] = vec
                length[r] = vec[targets]

        return RecordTable(s, targets, f1, f2, rule, endpoints, length, eligible,
                           kp_s, kp_t, ks_s, ks_t, k2)

    def side_matrix(self, specs: Sequence[SideSpec], tab: RecordTable, rows: np.ndarray,
                    col: int, side: str, k: int) -> np.ndarray:
        """Boolean [record, spec]: record's pair satisfies the side condition"""
        out = np.zeros((len(rows), len(specs)), dtype=bool)
        if side == 's':
            kp, ks, tree = tab.kp_s[rows, col], tab.ks_s[rows, col], self.spts[tab.s]
        else:
            t = int(tab.targets[col])
            kp, ks, tree = tab.kp_t[rows, col], tab.ks_t[rows, col], self.spts[t]
        k2 = tab.k2[rows, col]
        clean_cols, clean_vs = [], []
        for j, spec in enumerate(specs):
            v = spec.variant
            if v == Variant.PRIMARY_INTACT:
                out[:, j] = kp >= min(spec.dist, k)
            elif v == Variant.BOTH_INTACT:
                out[:, j] = (kp >= min(spec.dist, k)) & (ks >= np.minimum(spec.dist, k2))
            elif v == Variant.GEOMETRIC:
                out[:, j] = (kp >= self.geo_length(spec.geo, k)) & (ks >= np.minimum(spec.dist, k2))
            else:
                clean_cols.append(j)
                clean_vs.append(spec.clean)
        if clean_cols and len(rows):
            out[:, clean_cols] = clean_mask(tree, tab.endpoints[rows], clean_vs)
        return out

    # scalar predicates

    def orderings(self, pair: Sequence[int], rule: PairRule) -> List[Tuple[int, int, PairRule]]:
        e, f = int(pair[0]), int(pair[1])
        if rule == PairRule.BOTH_PRIMARY:
            # both on st: order does not change eligibility or any primary offset
            return [(e, f, rule)]
        return [(e, f, rule), (f, e, rule)]

    def eligible(self, s: int, t: int, pair: Sequence[int], rule: PairRule) -> bool:
        if len(set(pair)) != 2 or s == t:
            return False
        tab = self.table(s, self.orderings(pair, rule), np.array([t]), with_lengths=False)
        return bool(tab.eligible[:, 0].any())

    def satisfies(self, key: MaxKey, pair: Sequence[int]) -> bool:
        """Some eligible ordering of `pair` meets both side conditions of `key`"""
        if len(set(pair)) != 2 or key.s == key.t:
            return False
        nkey = self.normalise(key)
        k, _ = self.span(key.s, key.t)
        if k == INF:
            return False
        tab = self.table(key.s, self.orderings(pair, key.rule), np.array([key.t]), with_lengths=False)
        rows = np.flatnonzero(tab.eligible[:, 0])
        if len(rows) == 0:
            return False
        ok_s = self.side_matrix([nkey.side_s], tab, rows, 0, 's', k)[:, 0]
        ok_t = self.side_matrix([nkey.side_t], tab, rows, 0, 't', k)[:, 0]
        return bool((ok_s & ok_t).any())


def first_rows(sm: np.ndarray, tm: np.ndarray) -> np.ndarray:
    """first[i, j] = smallest row r with sm[r, i] and tm[r, j], or -1 when there is none.

    Rows are scanned in growing chunks and only the still open (i, j)
    combinations that some row satisfies are carried to the next chunk.
    """
    R, S, T = sm.shape[0], sm.shape[1], tm.shape[1]
    first = np.full((S, T), -1, dtype=np.int64)
    # counts stay below 2^24, exact in float32
    open_ = (sm.T.astype(np.float32) @ tm.astype(np.float32)) > 0
    start, size = 0, ARGMAX_CHUNK
    while start < R and open_.any():
        live_i = np.flatnonzero(open_.any(axis=1))
        live_j = np.flatnonzero(open_.any(axis=0))
        a = sm[start:start + size][:, live_i]
        b = tm[start:start + size][:, live_j]
        both = a[:, :, None] & b[:, None, :] & open_[np.ix_(live_i, live_j)][None, :, :]
        hit = both.any(axis=0)
        if hit.any():
            pos = both.argmax(axis=0)
            ii, jj = np.nonzero(hit)
            first[live_i[ii], live_j[jj]] = start + pos[ii, jj]
            open_[live_i[ii], live_j[jj]] = False
        start += size
        size *= 2
    return first


def eligible_pair(pg: PerturbedGraph, spts: Sequence[ShortestPathTree], idx: SingleFaultIndex,
                  s: int, t: int, pair: Sequence[int], rule: PairRule) -> bool:
    """Eligibility decided by the distance identities alone"""
    e, f = int(pair[0]), int(pair[1])
    if e == f:
        return False
    on_e = edge_on_path(pg, spts, s, t, e)
    on_f = edge_on_path(pg, spts, s, t, f)
    if rule == PairRule.BOTH_PRIMARY:
        return on_e and on_f
    return (on_e and idx.edge_on_secondary(s, t, e, f)) or (on_f and idx.edge_on_secondary(s, t, f, e))


def satisfies(evaluator: KeyEvaluator, key: MaxKey, pair: Sequence[int]) -> bool:
    return evaluator.satisfies(key, pair)


class MaximiserRegistry:
    """MaxKey -> MaxEntry table built group by group"""

    def __init__(self, evaluator: KeyEvaluator, mem_cap: int = 5_000_000):
        self.evaluator = evaluator
        self.mem_cap = mem_cap
        self._table: Dict[MaxKey, MaxEntry] = {}
        self.counters: Counter = Counter()
        self.provenance: Dict[Tuple[int, int, int], MaxKey] = {}
        self.probes = 0
        self._lock = threading.Lock()
        self._tables: Dict[int, RecordTable] = {}
        self._table_bytes = 0

    def __len__(self):
        return len(self._table)

    def __contains__(self, key) -> bool:
        return self.evaluator.normalise(key) in self._table

    def items(self) -> Iterable[Tuple[MaxKey, MaxEntry]]:
        return self._table.items()

    def variant_counts(self) -> Dict[str, int]:
        return {v.name: self.counters.get(v.name, 0) for v in Variant}

    def lookup(self, key: MaxKey) -> Optional[MaxEntry]:
        nkey = self.evaluator.normalise(key)
        with self._lock:
            self.probes += 1
        return self._table.get(nkey)

    def _register(self, key: MaxKey, entry: MaxEntry, family: str):
        with self._lock:
            if key in self._table:
                return
            self._table[key] = entry
            self.counters[Variant(key.variant_s).name] += 1
            self.counters[family] += 1
            if len(self._table) > self.mem_cap:
                raise MemoryCapExceeded(self.sizing_report())

    def sizing_report(self) -> Dict:
        n = self.evaluator.pg.n
        return {
            'cap': self.mem_cap,
            'entries': len(self._table),
            'n': n,
            'entries_per_pair': round(len(self._table) / max(n * (n - 1), 1), 2),
            'families': dict(self.counters),
        }

    # build

    def _source_orderings(self, s: int) -> List[Tuple[int, int, PairRule]]:
        ev = self.evaluator
        ts = ev.spts[s]
        tree_edges = ts.tree_edges()
        out = []
        for f1 in tree_edges:
            for f2 in ev.sfi.tree(s, f1).tree_edges():
                if f2 != f1:
                    out.append((f1, f2, PairRule.PRIMARY_SECONDARY))
        lows = {e: ts.lower_endpoint(ev.pg, e) for e in tree_edges}
        for e, f in combinations(tree_edges, 2):
            if ts.is_ancestor(lows[e], lows[f]):
                out.append((e, f, PairRule.BOTH_PRIMARY))
            elif ts.is_ancestor(lows[f], lows[e]):
                out.append((f, e, PairRule.BOTH_PRIMARY))
        return out

    def _source_table(self, s: int) -> RecordTable:
        tab = self._tables.get(s)
        if tab is not None:
            return tab
        tab = self.evaluator.table(s, self._source_orderings(s))
        with self._lock:
            if self._table_bytes + tab.nbytes <= TABLE_CACHE_BYTES:
                self._tables[s] = tab
                self._table_bytes += tab.nbytes
        return tab

    def _argmax(self, tab: RecordTable, col: int, rule: PairRule,
                specs_s: Sequence[SideSpec], specs_t: Sequence[SideSpec]) -> List[Tuple[MaxKey, MaxEntry]]:
        """First record, in (longest, smallest pair) order, satisfying each (side_s, side_t) combination"""
        if not specs_s or not specs_t:
            return []
        s, t = tab.s, int(tab.targets[col])
        k, _ = self.evaluator.span(s, t)
        rows = np.flatnonzero((tab.rule == int(rule)) & tab.eligible[:, col])
        if len(rows) == 0:
            return []
        order = np.lexsort((tab.pair_b[rows], tab.pair_a[rows], -tab.length[rows, col]))
        rows = rows[order]
        sm = self.evaluator.side_matrix(specs_s, tab, rows, col, 's', k)
        tm = self.evaluator.side_matrix(specs_t, tab, rows, col, 't', k)
        first = first_rows(sm, tm)
        out = []
        for i, j in zip(*np.nonzero(first >= 0)):
            r = rows[first[i, j]]
            length = int(tab.length[r, col])
            entry = MaxEntry((int(tab.pair_a[r]), int(tab.pair_b[r])), INF if length >= LEN_INF else length)
            out.append((MaxKey.make(s, t, specs_s[i], specs_t[j], rule), entry))
        return out

    def _targets(self, s: int) -> List[int]:
        ts = self.evaluator.spts[s]
        return [t for t in range(self.evaluator.pg.n) if t != s and ts.reachable(t)]

    def _group1(self, s: int) -> List[Tuple[MaxKey, MaxEntry]]:
        ev = self.evaluator
        tab = self._source_table(s)
        out = []
        for t in self._targets(s):
            col = tab.column[t]
            specs_t = ev.target_specs(s, t)
            for rule in PairRule:
                out.extend(self._argmax(tab, col, rule, ev.source_specs(s, t, rule), specs_t))
        return out

    def _group2(self, s: int, clean: Dict[Tuple[int, int], Set[int]]) -> List[Tuple[MaxKey, MaxEntry]]:
        ev = self.evaluator
        tab = self._source_table(s)
        out = []
        for t in self._targets(s):
            cands = clean.get((min(s, t), max(s, t)), set())
            ps = [SideSpec.clean_at(p) for p in sorted(cands) if p != s]
            qs = [SideSpec.clean_at(q) for q in sorted(cands) if q != t]
            col = tab.column[t]
            specs_t = ev.target_specs(s, t)
            for rule in PairRule:
                out.extend(self._argmax(tab, col, rule, ps, specs_t))
                out.extend(self._argmax(tab, col, rule, ev.source_specs(s, t, rule), qs))
        return out

    def _group3(self, s: int, clean: Dict[Tuple[int, int], Set[int]]) -> List[Tuple[MaxKey, MaxEntry]]:
        tab = self._source_table(s)
        out = []
        for t in self._targets(s):
            cands = clean.get((min(s, t), max(s, t)), set())
            ps = [SideSpec.clean_at(p) for p in sorted(cands) if p != s]
            qs = [SideSpec.clean_at(q) for q in sorted(cands) if q != t]
            for rule in PairRule:
                out.extend(self._argmax(tab, tab.column[t], rule, ps, qs))
        return out

    def _run_phase(self, group: str, family: str, jobs: int, *args) -> Dict[Tuple[int, int], Set[int]]:
        """Run one group over all sources; returns the endpoints of the new entries per vertex pair"""
        n = self.evaluator.pg.n
        produced: Dict[Tuple[int, int], Set[int]] = defaultdict(set)
        batches = fan_out(_group_batch, range(n), (self, group, args), jobs)
        graph = self.evaluator.pg.graph
        for batch in batches:
            for key, entry in batch:
                self._register(key, entry, family)
                lo, hi = min(key.s, key.t), max(key.s, key.t)
                for e in entry.pair:
                    for x in graph.endpoints(e):
                        if x not in produced[(lo, hi)] and family == 'group1':
                            self.provenance.setdefault((lo, hi, x), key)
                        produced[(lo, hi)].add(x)
        logger.info(f"Registry {family}: {self.counters[family]} entries (total {len(self)})")
        return produced

    def build(self, jobs: int = 1):
        c1 = self._run_phase('_group1', 'group1', jobs)
        c2_new = self._run_phase('_group2', 'group2', jobs, c1)
        c2 = {pair: c1.get(pair, set()) | c2_new.get(pair, set()) for pair in set(c1) | set(c2_new)}
        self._run_phase('_group3', 'group3', jobs, c2)
        self._tables.clear()
        self._table_bytes = 0
        logger.info(f"Registry built: {len(self)} entries, variants {self.variant_counts()}")

    def compute_on_demand(self, key: MaxKey) -> Optional[MaxEntry]:
        """Argmax for one key over the pairs eligible at (s, t); the result is stored"""
        ev = self.evaluator
        nkey = ev.normalise(key)
        s, t = nkey.s, nkey.t
        ts = ev.spts[s]
        if s == t or not ts.reachable(t):
            return None
        primary = ts.path_edges(t)
        orderings: List[Tuple[int, int, PairRule]] = []
        if nkey.rule == PairRule.BOTH_PRIMARY:
            orderings = [(e, f, PairRule.BOTH_PRIMARY) for e, f in combinations(primary, 2)]
        else:
            for f1 in primary:
                secondary = ev.sfi.tree(s, f1).path_edges(t)
                orderings.extend((f1, f2, PairRule.PRIMARY_SECONDARY) for f2 in secondary if f2 != f1)
        if not orderings:
            return None
        tab = ev.table(s, orderings, np.array([t]))
        found = self._argmax(tab, 0, nkey.rule, [nkey.side_s], [nkey.side_t])
        if not found:
            return None
        _, entry = found[0]
        with self._lock:
            if nkey not in self._table:
                self._table[nkey] = entry
                self.counters[Variant(nkey.variant_s).name] += 1
                self.counters['on_demand'] += 1
        logger.warning(f"Computed maximiser on demand for key {tuple(nkey)}")
        return entry

    def restore(self, items: Iterable[Tuple[MaxKey, MaxEntry]]):
        for key, entry in items:
            self._table[key] = entry
            self.counters[Variant(key.variant_s).name] += 1
            self.counters['restored'] += 1


def _group_batch(state, s: int) -> List[Tuple[MaxKey, MaxEntry]]:
    registry, group, args = state
    return getattr(registry, group)(s, *args)


def build_registry(pg: PerturbedGraph, spts: Sequence[ShortestPathTree], idx: SingleFaultIndex,
                   epsilon: float, mem_cap: int = 5_000_000, jobs: int = 1,
                   landmarks: Optional[LandmarkSets] = None, dclose_constant: int = 4) -> MaximiserRegistry:
    registry = MaximiserRegistry(KeyEvaluator(pg, spts, idx, epsilon, landmarks, dclose_constant), mem_cap)
    registry.build(jobs)
    return registry


def lookup(reg: MaximiserRegistry, key: MaxKey) -> Optional[MaxEntry]:
    return reg.lookup(key)
