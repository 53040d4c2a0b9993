#!/usr/bin/env python3
"""
Test the maximiser registry: key predicates, argmax and tie-breaking against brute force,
on-demand recomputation and the entry cap
"""
import logging
import math
from itertools import combinations

import numpy as np
import pytest

from config import Config
from graph_core import INF, load_graph, perturb
from graph_generator import C5_TEXT, K4_TEXT, P4_TEXT, gnp, path
from landmarks import LandmarkSets, level_count
from maximisers import (
    ARGMAX_CHUNK, KeyEvaluator, MaxEntry, MaxKey, MemoryCapExceeded, PairRule, SideSpec, Variant,
    build_registry, eligible_pair, first_rows, lookup, satisfies,
)
from oracle import assemble, build_oracle
from verifier import brute_dist

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

PS = PairRule.PRIMARY_SECONDARY
BP = PairRule.BOTH_PRIMARY


@pytest.fixture(scope='module')
def c5():
    return build_oracle(load_graph(C5_TEXT), Config())


@pytest.fixture(scope='module')
def k4():
    return build_oracle(load_graph(K4_TEXT), Config())


@pytest.fixture(scope='module')
def p4():
    return build_oracle(load_graph(P4_TEXT), Config())


# key evaluator

def test_span(c5, p4):
    ev = c5.registry.evaluator
    assert ev.span(0, 2) == (2, 3)
    # every single fault on a path disconnects
    assert p4.registry.evaluator.span(0, 3) == (3, 3)


def test_geometric_exponents(c5):
    ev = c5.registry.evaluator
    assert ev.geo_exponents(5) == [0, 4, 5, 7, 8]
    assert ev.geo_exponent_within(3) == 4
    assert ev.geo_exponent_within(0.5) == 0
    with pytest.raises(ValueError):
        ev.geo_exponent_within(INF)


def test_normalise_clamps_distances(c5):
    ev = c5.registry.evaluator
    key = MaxKey.make(0, 2, SideSpec.prim(9), SideSpec.both(0))
    nkey = ev.normalise(key)
    assert nkey.side_s == SideSpec.prim(2)
    assert nkey.side_t == SideSpec.both(1)
    geo = ev.normalise(MaxKey.make(0, 2, SideSpec.geometric(3, 1), SideSpec.prim(1)))
    # (1.25)^0 .. (1.25)^3 all floor to 1
    assert geo.side_s == SideSpec.geometric(0, 1)


def test_eligible_pair_examples(c5, p4):
    assert eligible_pair(c5.pg, c5.spts, c5.sfi, 0, 2, (0, 3), PS)
    assert not eligible_pair(c5.pg, c5.spts, c5.sfi, 0, 2, (3, 2), PS)
    assert not eligible_pair(c5.pg, c5.spts, c5.sfi, 0, 2, (1, 1), PS)
    assert eligible_pair(p4.pg, p4.spts, p4.sfi, 0, 3, (0, 2), BP)
    assert not eligible_pair(p4.pg, p4.spts, p4.sfi, 0, 3, (0, 2), PS)


def test_eligible_agrees_with_identities(c5, k4):
    for oracle in (c5, k4):
        ev = oracle.registry.evaluator
        for s in range(oracle.pg.n):
            for t in range(oracle.pg.n):
                for pair in combinations(range(oracle.graph.m), 2):
                    for rule in PairRule:
                        expected = s != t and eligible_pair(oracle.pg, oracle.spts, oracle.sfi, s, t, pair, rule)
                        assert ev.eligible(s, t, pair, rule) == expected


def test_satisfies_examples(c5):
    ev = c5.registry.evaluator
    assert satisfies(ev, MaxKey.make(0, 2, SideSpec.both(1), SideSpec.prim(1)), (0, 4))
    assert not ev.satisfies(MaxKey.make(0, 2, SideSpec.both(2), SideSpec.prim(1)), (0, 4))
    assert not ev.satisfies(MaxKey.make(0, 2, SideSpec.prim(2), SideSpec.prim(1)), (0, 4))
    assert not ev.satisfies(MaxKey.make(0, 2, SideSpec.clean_at(4), SideSpec.prim(1)), (0, 3))
    assert ev.satisfies(MaxKey.make(0, 2, SideSpec.clean_at(4), SideSpec.prim(1), BP), (0, 1))


# registry contents

def test_c5_lookup_breaks_ties_by_smallest_pair(c5):
    entry = lookup(c5.registry, MaxKey.make(0, 2, SideSpec.prim(1), SideSpec.prim(1)))
    # all six eligible pairs disconnect 0 from 2
    assert entry == MaxEntry((0, 2), INF)


def test_k4_entries(k4):
    entry = k4.registry.lookup(MaxKey.make(0, 1, SideSpec.prim(1), SideSpec.prim(1)))
    secondary = k4.sfi.tree(0, 0).path_edges(1)
    assert entry.length == 2
    assert entry.pair == (0, min(secondary))
    # a single-edge primary path has no both-primary pairs
    assert MaxKey.make(0, 1, SideSpec.prim(1), SideSpec.prim(1), BP) not in k4.registry


def test_lookup_counts_probes(k4):
    before = k4.registry.probes
    k4.registry.lookup(MaxKey.make(0, 1, SideSpec.prim(1), SideSpec.prim(1)))
    k4.registry.lookup(MaxKey.make(2, 3, SideSpec.prim(1), SideSpec.prim(1)))
    assert k4.registry.probes == before + 2


@pytest.mark.parametrize('name', ['c5', 'k4'])
def test_entries_match_brute_force(name, request):
    """Each stored pair satisfies its key, is longest, and is the smallest such pair"""
    oracle = request.getfixturevalue(name)
    ev = oracle.registry.evaluator
    pairs = list(combinations(range(oracle.graph.m), 2))
    for key, entry in list(oracle.registry.items()):
        admitted = [p for p in pairs if ev.satisfies(key, p)]
        assert entry.pair in admitted, key
        lengths = {p: brute_dist(oracle.pg, key.s, key.t, p) for p in admitted}
        best = max(lengths.values())
        assert entry.length == best, key
        assert entry.pair == min(p for p in admitted if lengths[p] == best), key


def test_every_variant_is_built(c5):
    counts = c5.registry.variant_counts()
    assert set(counts) == {v.name for v in Variant}
    assert sum(counts.values()) == len(c5.registry)
    for name in ('PRIMARY_INTACT', 'BOTH_INTACT', 'GEOMETRIC', 'CLEAN'):
        assert counts[name] > 0
    assert c5.registry.counters['group1'] > 0


def test_clean_keys_use_pair_endpoints(c5):
    """Clean vertices of stored keys are endpoints of some earlier entry for the same vertex pair"""
    endpoints = {}
    for key, entry in c5.registry.items():
        if key.variant_s != Variant.CLEAN and key.variant_t != Variant.CLEAN:
            lo, hi = min(key.s, key.t), max(key.s, key.t)
            for e in entry.pair:
                endpoints.setdefault((lo, hi), set()).update(c5.graph.endpoints(e))
    for key, _ in c5.registry.items():
        lo, hi = min(key.s, key.t), max(key.s, key.t)
        if key.variant_s == Variant.CLEAN and key.variant_t != Variant.CLEAN:
            assert key.clean0 in endpoints[(lo, hi)]
        if key.variant_t == Variant.CLEAN and key.variant_s != Variant.CLEAN:
            assert key.clean1 in endpoints[(lo, hi)]


def test_compute_on_demand_reproduces_entries():
    registry = build_oracle(load_graph(C5_TEXT), Config()).registry
    sample = list(registry.items())[:200]
    for key, entry in sample:
        del registry._table[key]
        assert key not in registry
        assert registry.compute_on_demand(key) == entry
        assert key in registry
    assert registry.counters['on_demand'] == len(sample)


def test_compute_on_demand_without_eligible_pairs(k4):
    assert k4.registry.compute_on_demand(MaxKey.make(0, 1, SideSpec.prim(1), SideSpec.prim(1), BP)) is None
    assert k4.registry.compute_on_demand(MaxKey.make(2, 2, SideSpec.prim(1), SideSpec.prim(1))) is None


# budget schedule

@pytest.fixture(scope='module')
def long_path():
    """Path on 40 vertices where only vertex 0 sits above landmark level 0"""
    pg = perturb(path(40), 1)
    spts, sfi, _, _ = assemble(pg, Config(), build_registry=False)
    levels = np.zeros((level_count(40) + 1, 40), dtype=bool)
    levels[0] = True
    levels[:, 0] = True
    return pg, spts, sfi, LandmarkSets(levels, 4.0, 1)


def test_budget_schedule(long_path):
    pg, spts, sfi, landmarks = long_path
    ev = KeyEvaluator(pg, spts, sfi, 0.25, landmarks, dclose_constant=4)
    assert ev.reach(0) == 4 << 6
    assert ev.reach(30) == 4
    assert ev.budgets(30, 20) == [1, 2, 3, 4, 8, 16, 20]
    assert ev.budgets(0, 20) == list(range(1, 21))
    assert ev.budget(30, 11, 20) == 8
    assert ev.budget(30, 3, 20) == 3
    assert ev.budget(30, 25, 20) == 20
    assert ev.budget(0, 11, 20) == 11
    # no hierarchy: every budget is kept
    assert KeyEvaluator(pg, spts, sfi, 0.25).budgets(30, 20) == list(range(1, 21))


def test_enumerated_keys_are_canonical(long_path):
    pg, spts, sfi, landmarks = long_path
    ev = KeyEvaluator(pg, spts, sfi, 0.25, landmarks)
    for s, t in ((0, 30), (30, 0), (10, 35)):
        targets = ev.target_specs(s, t)
        assert [spec.dist for spec in targets] == ev.budgets(t, abs(s - t))
        for rule in PairRule:
            for spec_s in ev.source_specs(s, t, rule):
                for spec_t in targets:
                    key = MaxKey.make(s, t, spec_s, spec_t, rule)
                    assert ev.normalise(key) == key


def test_off_schedule_budget_rounds_down(long_path):
    pg, spts, sfi, landmarks = long_path
    ev = KeyEvaluator(pg, spts, sfi, 0.25, landmarks)
    key = MaxKey.make(10, 35, SideSpec.prim(11), SideSpec.prim(13))
    assert ev.normalise(key) == MaxKey.make(10, 35, SideSpec.prim(8), SideSpec.prim(8))


def test_first_rows_matches_scan():
    rng = np.random.default_rng(7)
    for rows in (1, 5, ARGMAX_CHUNK + 1, 300):
        sm = rng.random((rows, 6)) < 0.2
        tm = rng.random((rows, 4)) < 0.3
        first = first_rows(sm, tm)
        for i in range(6):
            for j in range(4):
                hits = np.flatnonzero(sm[:, i] & tm[:, j])
                assert first[i, j] == (hits[0] if len(hits) else -1), (rows, i, j)


@pytest.mark.parametrize('name', ['p4', 'c5', 'k4'])
def test_reversed_keys_select_the_same_pair(name, request):
    """A primary-intact key at (s, t) and its mirror at (t, s) share their entry"""
    oracle = request.getfixturevalue(name)
    checked = 0
    for key, entry in list(oracle.registry.items()):
        if key.variant_s != Variant.PRIMARY_INTACT or key.variant_t != Variant.PRIMARY_INTACT:
            continue
        mirrored = MaxKey.make(key.t, key.s, key.side_t, key.side_s, key.rule)
        assert oracle.registry.lookup(mirrored) == entry, key
        checked += 1
    assert checked > 0


def test_entry_count_growth():
    """Doubling n on sparse random graphs grows the registry by at most five times"""
    entries = {}
    for n in (16, 32):
        graphs = [gnp(n, 2 * math.log(n) / n, seed) for seed in (1, 2)]
        entries[n] = sum(build_oracle(g, Config()).stats.entries for g in graphs)
    logger.info(f"Registry entries by n: {entries}")
    assert entries[32] <= 5 * entries[16]


def test_parallel_build_matches_serial(c5):
    parallel = build_oracle(c5.graph, Config().with_overrides(jobs=2))
    assert dict(parallel.registry.items()) == dict(c5.registry.items())


def test_memory_cap():
    oracle = build_oracle(load_graph(C5_TEXT), Config())
    with pytest.raises(MemoryCapExceeded) as exc:
        build_registry(oracle.pg, oracle.spts, oracle.sfi, 0.25, mem_cap=1)
    assert exc.value.report['cap'] == 1
    assert exc.value.report['entries'] == 2


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
