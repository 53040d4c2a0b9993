#!/usr/bin/env python3
"""
Test registry snapshots
"""
import logging

import numpy as np
import pytest

from config import Config
from graph_core import load_graph
from graph_generator import C5_TEXT, K4_TEXT
from oracle import build_oracle
from snapshot import HEADER_DTYPE, MAGIC, SnapshotError, load_snapshot, save_snapshot
from verifier import fault_sets

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


@pytest.fixture(scope='module')
def k4():
    return build_oracle(load_graph(K4_TEXT), Config())


@pytest.fixture
def snapshot_file(tmp_path, k4):
    return save_snapshot(k4, tmp_path / "k4.dfto")


def test_save_load_save_is_byte_identical(tmp_path, snapshot_file):
    loaded = load_snapshot(snapshot_file, Config())
    again = save_snapshot(loaded, tmp_path / "again.dfto")
    assert again.read_bytes() == snapshot_file.read_bytes()


def test_header(snapshot_file, k4):
    data = snapshot_file.read_bytes()
    assert data[:4] == MAGIC
    header = np.frombuffer(data, dtype=HEADER_DTYPE, count=1)[0]
    assert int(header['n']) == 4
    assert int(header['m']) == 6
    assert int(header['records']) == len(k4.registry)
    assert int(header['seed']) == k4.pg.seed


def test_loaded_oracle_matches(snapshot_file, k4):
    loaded = load_snapshot(snapshot_file, Config())
    assert len(loaded.registry) == len(k4.registry)
    assert dict(loaded.registry.items()) == dict(k4.registry.items())
    assert np.array_equal(loaded.landmarks.levels, k4.landmarks.levels)
    for F in fault_sets(k4.graph, 2):
        for s in range(4):
            for t in range(4):
                assert loaded.distance(s, t, F) == k4.distance(s, t, F)


def test_parameters_come_from_the_file(tmp_path):
    oracle = build_oracle(load_graph(C5_TEXT), Config().with_overrides(epsilon=0.5, landmark_c=2.0))
    path = save_snapshot(oracle, tmp_path / "c5.dfto")
    loaded = load_snapshot(path, Config())
    assert loaded.config.epsilon == 0.5
    assert loaded.config.landmark_c == 2.0
    assert loaded.registry.evaluator.epsilon == 0.5


def test_bad_magic(tmp_path, snapshot_file):
    bad = tmp_path / "bad.dfto"
    bad.write_bytes(b"XXXX" + snapshot_file.read_bytes()[4:])
    with pytest.raises(SnapshotError):
        load_snapshot(bad)


def test_bad_version(tmp_path, snapshot_file):
    data = bytearray(snapshot_file.read_bytes())
    data[4:6] = (99).to_bytes(2, 'little')
    bad = tmp_path / "v99.dfto"
    bad.write_bytes(bytes(data))
    with pytest.raises(SnapshotError):
        load_snapshot(bad)


@pytest.mark.parametrize('cut', [1, 13])
def test_truncated(tmp_path, snapshot_file, cut):
    short = tmp_path / "short.dfto"
    short.write_bytes(snapshot_file.read_bytes()[:-cut])
    with pytest.raises(SnapshotError):
        load_snapshot(short)


def test_too_short_and_missing(tmp_path):
    tiny = tmp_path / "tiny.dfto"
    tiny.write_bytes(b"DF")
    with pytest.raises(SnapshotError):
        load_snapshot(tiny)
    with pytest.raises(SnapshotError):
        load_snapshot(tmp_path / "nope.dfto")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
