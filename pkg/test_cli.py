#!/usr/bin/env python3
"""
Test the command line end to end: generate, build, query, verify, bench, stats
"""
import json
import logging

import pytest

from graph_core import load_graph, read_graph_file
from graph_generator import C5_TEXT
from main import EXIT_ERROR, EXIT_OK, main
from snapshot import MAGIC

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def db(workdir):
    return str(workdir / "runs.db")


@pytest.fixture
def snapshot(workdir, db, capsys):
    graph = workdir / "c5.txt"
    graph.write_text(C5_TEXT)
    snap = workdir / "c5.snap"
    assert main(['build', str(graph), '--out', str(snap), '--db', db]) == EXIT_OK
    capsys.readouterr()
    return str(snap)


def _lines(capsys):
    return capsys.readouterr().out.strip().splitlines()


def test_generate(workdir, capsys):
    out = workdir / "cycle.txt"
    assert main(['generate', 'cycle', '5', '--out', str(out)]) == EXIT_OK
    assert _lines(capsys)[-1] == str(out)
    assert read_graph_file(out).edges == load_graph(C5_TEXT).edges


def test_generate_grid(workdir):
    out = workdir / "grid.txt"
    assert main(['generate', 'grid', '3', '4', '--out', str(out)]) == EXIT_OK
    g = read_graph_file(out)
    assert (g.n, g.m) == (12, 17)


def test_build_writes_snapshot_and_stats(workdir, db, capsys):
    graph = workdir / "c5.txt"
    graph.write_text(C5_TEXT)
    snap = workdir / "out.snap"
    assert main(['build', str(graph), '--out', str(snap), '--db', db]) == EXIT_OK
    lines = _lines(capsys)
    assert lines[-1] == str(snap)
    stats = json.loads("\n".join(lines[:-1]))
    assert stats['n'] == 5
    assert stats['entries'] > 0
    assert snap.read_bytes()[:4] == MAGIC


def test_rebuild_is_byte_identical(workdir, db, snapshot):
    again = workdir / "again.snap"
    graph = workdir / "c5.txt"
    assert main(['build', str(graph), '--out', str(again), '--db', db]) == EXIT_OK
    assert again.read_bytes() == open(snapshot, 'rb').read()


@pytest.mark.parametrize('faults, expected', [
    ([], '2'),
    (['0,1'], '3'),
    (['0,1', '3-4'], 'INF'),
    (['1:2', '4,0'], 'INF'),
    (['2,3'], '2'),
])
def test_query(snapshot, capsys, faults, expected):
    assert main(['query', snapshot, '0', '2', *faults]) == EXIT_OK
    lines = _lines(capsys)
    assert lines[0] == expected
    assert lines[1].startswith('probes=')


def test_query_from_graph_file(workdir, snapshot, capsys):
    assert main(['query', str(workdir / "c5.txt"), '0', '2', '0,1']) == EXIT_OK
    assert _lines(capsys)[0] == '3'


def test_query_strict(snapshot, capsys):
    assert main(['query', snapshot, '0', '2', '0,1', '--strict']) == EXIT_OK
    assert _lines(capsys)[0] == '3'


@pytest.mark.parametrize('args', [
    ['0', '9'],
    ['0', '2', '0,2'],
    ['0', '2', '0'],
])
def test_query_errors(snapshot, args):
    assert main(['query', snapshot, *args]) == EXIT_ERROR


def test_verify(workdir, db, snapshot, capsys):
    report = workdir / "report.json"
    assert main(['verify', snapshot, '--out', str(report), '--db', db]) == EXIT_OK
    assert "matches 100%" in _lines(capsys)[-1]
    data = json.loads(report.read_text())
    assert data['totals']['queries'] == 400
    assert data['totals']['mismatches'] == 0


def test_verify_sampled(workdir, db, snapshot, capsys):
    report = workdir / "sampled.json"
    assert main(['verify', snapshot, '--sample', '25', '--no-instrument',
                 '--out', str(report), '--db', db]) == EXIT_OK
    assert json.loads(report.read_text())['totals']['queries'] == 25


def test_bench(workdir, db, snapshot, capsys):
    report = workdir / "bench.json"
    assert main(['bench', snapshot, '--queries', '40', '--out', str(report), '--db', db]) == EXIT_OK
    assert "Benchmark results" in capsys.readouterr().out
    data = json.loads(report.read_text())
    assert data['queries'] == 40
    assert sum(data['probe_histogram'].values()) == 40


def test_stats(workdir, db, snapshot, capsys):
    assert main(['verify', snapshot, '--max-faults', '1', '--out', str(workdir / "r.json"), '--db', db]) == EXIT_OK
    capsys.readouterr()
    assert main(['stats', '--db', db]) == EXIT_OK
    out = capsys.readouterr().out
    assert "Builds (1):" in out
    assert "Reports (1):" in out
    assert "verify:" in out


def test_invalid_configuration(db):
    assert main(['stats', '--epsilon', '2', '--db', db]) == EXIT_ERROR


def test_missing_graph_file(workdir, db):
    assert main(['build', str(workdir / "missing.txt"), '--db', db]) == EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
