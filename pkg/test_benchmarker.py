#!/usr/bin/env python3
"""
Test the query benchmark harness
"""
import logging

import pytest

from benchmarker import Benchmarker
from config import Config
from graph_generator import fixtures
from oracle import build_oracle
from query_engine import CaseTag

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


@pytest.fixture(scope='module')
def oracle():
    return build_oracle(fixtures()['chords'], Config())


def test_random_queries(oracle):
    queries = Benchmarker(oracle, seed=4).random_queries(100)
    assert queries == Benchmarker(oracle, seed=4).random_queries(100)
    for s, t, faults in queries:
        assert s != t
        assert len(set(faults)) == 2
        assert all(0 <= e < oracle.graph.m for e in faults)


def test_run_benchmark(oracle):
    bench = Benchmarker(oracle, seed=1)
    results = bench.run_benchmark(80)
    logger.info(bench.generate_report())
    assert results['queries'] == 80
    assert results['n'] == 12
    assert sum(results['probe_histogram'].values()) == 80
    assert sum(results['by_tag'].values()) == 80
    assert set(results['by_tag']) <= {tag.name for tag in CaseTag}
    assert results['probe_max'] >= results['probe_mean'] >= 0
    assert 0.0 <= results['certified_fraction'] <= 1.0


def test_report_and_tag_summary(oracle):
    bench = Benchmarker(oracle, seed=2)
    bench.run_benchmark(30)
    report = bench.generate_report()
    assert report.startswith("Benchmark results")
    assert "Probe histogram:" in report
    summary = bench.probes_by_tag()
    assert list(summary.columns) == ['count', 'mean', 'max']
    assert int(summary['count'].sum()) == 30


def test_empty_benchmark(oracle):
    bench = Benchmarker(oracle)
    assert bench.run_benchmark(0) == {'queries': 0}
    assert bench.generate_report() == "No benchmark results available"
    assert bench.probes_by_tag().empty


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
