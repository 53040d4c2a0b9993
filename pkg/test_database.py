#!/usr/bin/env python3
"""
Test the run ledger
"""
import logging

import pytest

from config import Config
from database import RunDatabase, graph_digest
from graph_core import load_graph
from graph_generator import C5_TEXT, P4_TEXT
from oracle import build_oracle

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


@pytest.fixture
def db(tmp_path):
    return RunDatabase(str(tmp_path / "runs.db"))


def test_graph_digest():
    c5, p4 = load_graph(C5_TEXT), load_graph(P4_TEXT)
    assert graph_digest(c5.edges) == graph_digest(load_graph(C5_TEXT).edges)
    assert graph_digest(c5.edges) != graph_digest(p4.edges)
    assert len(graph_digest(c5.edges)) == 16


def test_record_build(db):
    oracle = build_oracle(load_graph(C5_TEXT), Config())
    digest = graph_digest(oracle.graph.edges)
    row_id = db.record_build(digest, oracle.stats.to_dict())
    assert row_id == 1

    builds = db.list_builds()
    assert len(builds) == 1
    assert builds[0]['digest'] == digest
    assert builds[0]['n'] == 5
    assert builds[0]['entries'] == len(oracle.registry)
    assert builds[0]['variants'] == oracle.registry.variant_counts()


def test_builds_newest_first(db):
    for seed in (1, 2, 3):
        db.record_build('abc', {'n': 3, 'm': 2, 'seed': seed, 'entries': 0})
    builds = db.list_builds(limit=2)
    assert [b['seed'] for b in builds] == [3, 2]
    assert builds[0]['variants'] == {}


def test_reports(db):
    db.record_report('verify', 'queries 400, matches 100%', {'totals': {'queries': 400}}, digest='abc')
    db.record_report('bench', 'Benchmark results')
    assert len(db.list_reports()) == 2
    verify = db.list_reports('verify')
    assert len(verify) == 1
    assert verify[0]['digest'] == 'abc'
    assert 'queries' in verify[0]['payload']
    assert db.list_reports('bench')[0]['payload'] is None
    assert db.list_reports('nothing') == []


def test_reopen_keeps_rows(tmp_path):
    path = str(tmp_path / "runs.db")
    RunDatabase(path).record_report('verify', 'ok')
    assert len(RunDatabase(path).list_reports()) == 1


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
