"""
Binary registry snapshot (little-endian, see README for the layout).
Trees and the single-fault index are not stored: they are rebuilt from the
stored graph and perturbation on load.
"""
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from config import Config, config as default_config
from graph_core import Graph, PerturbedGraph
from landmarks import LandmarkSets
from maximisers import MaxEntry, MaxKey
from oracle import DistanceOracle, assemble

logger = logging.getLogger(__name__)

MAGIC = b"DFTO"
VERSION = 1

HEADER_DTYPE = np.dtype([
    ('magic', 'S4'), ('version', '<u2'), ('n', '<u4'), ('m', '<u4'),
    ('seed', '<i8'), ('scale', '<i8'), ('base', '<i8'),
    ('landmark_c', '<f8'), ('epsilon', '<f8'), ('dclose', '<u4'),
    ('levels', '<u4'), ('records', '<u8'),
])

RECORD_FIELDS = ('s', 't', 'rule', 'var_s', 'd_s', 'g_s', 'c_s',
                 'var_t', 'd_t', 'g_t', 'c_t', 'e1', 'e2', 'length')
RECORD_DTYPE = np.dtype([(name, '<i4') for name in RECORD_FIELDS])


class SnapshotError(Exception):
    """Unreadable or incompatible snapshot file"""


def _record(key: MaxKey, entry: MaxEntry) -> tuple:
    length = -1 if entry.length == float('inf') else int(entry.length)
    return (key.s, key.t, key.pair_rule, key.variant_s, key.dist0, key.geo_i, key.clean0,
            key.variant_t, key.dist1, key.geo_j, key.clean1, entry.pair[0], entry.pair[1], length)


def save_snapshot(oracle: DistanceOracle, path: Union[str, Path]) -> Path:
    path = Path(path)
    pg, cfg, lm = oracle.pg, oracle.config, oracle.landmarks
    rows = sorted(_record(k, e) for k, e in oracle.registry.items())

    header = np.zeros(1, dtype=HEADER_DTYPE)
    header[0] = (MAGIC, VERSION, pg.n, pg.graph.m, pg.seed, pg.scale, pg.base,
                 lm.c, cfg.epsilon, cfg.dclose_constant, lm.levels.shape[0], len(rows))
    edges = np.asarray(pg.graph.edges, dtype='<i4').reshape(-1, 2)
    records = np.array(rows, dtype=RECORD_DTYPE) if rows else np.zeros(0, dtype=RECORD_DTYPE)

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as fh:
        fh.write(header.tobytes())
        fh.write(edges.tobytes())
        fh.write(pg.perturbation.astype('<i8').tobytes())
        fh.write(lm.levels.astype(np.uint8).tobytes())
        fh.write(records.tobytes())
    logger.info(f"Snapshot written to {path}: {len(rows)} records")
    return path


def load_snapshot(path: Union[str, Path], cfg: Optional[Config] = None) -> DistanceOracle:
    """Rebuild the oracle from a snapshot; epsilon, c and the D-close constant come from the file"""
    cfg = cfg or default_config
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise SnapshotError(f"cannot read {path}: {e}") from e

    if len(data) < HEADER_DTYPE.itemsize:
        raise SnapshotError(f"{path} is too short to be a snapshot")
    header = np.frombuffer(data, dtype=HEADER_DTYPE, count=1)[0]
    if bytes(header['magic']) != MAGIC:
        raise SnapshotError(f"{path} has bad magic {bytes(header['magic'])!r}")
    if int(header['version']) != VERSION:
        raise SnapshotError(f"unsupported snapshot version {int(header['version'])}")

    n, m, levels = int(header['n']), int(header['m']), int(header['levels'])
    count = int(header['records'])
    offset = HEADER_DTYPE.itemsize
    expected = offset + 8 * m + 8 * m + levels * n + RECORD_DTYPE.itemsize * count
    if len(data) != expected:
        raise SnapshotError(f"{path} has {len(data)} bytes, expected {expected}")

    edges = np.frombuffer(data, dtype='<i4', count=2 * m, offset=offset).reshape(-1, 2)
    offset += 8 * m
    perturbation = np.frombuffer(data, dtype='<i8', count=m, offset=offset).astype(np.int64)
    offset += 8 * m
    membership = np.frombuffer(data, dtype=np.uint8, count=levels * n, offset=offset)
    offset += levels * n
    records = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=offset)

    cfg = cfg.with_overrides(epsilon=float(header['epsilon']), landmark_c=float(header['landmark_c']),
                             dclose_constant=int(header['dclose']))
    graph = Graph(n, [tuple(int(x) for x in e) for e in edges])
    pg = PerturbedGraph(graph, int(header['base']), perturbation, int(header['seed']), int(header['scale']))
    landmarks = LandmarkSets(membership.reshape(levels, n).astype(bool), cfg.landmark_c, pg.seed)
    spts, sfi, landmarks, registry = assemble(pg, cfg, landmarks, build_registry=False)

    inf = float('inf')
    registry.restore(
        (MaxKey(*(int(r[f]) for f in RECORD_FIELDS[:2]), int(r['var_s']), int(r['d_s']), int(r['g_s']),
                int(r['c_s']), int(r['var_t']), int(r['d_t']), int(r['g_t']), int(r['c_t']), int(r['rule'])),
         MaxEntry((int(r['e1']), int(r['e2'])), inf if int(r['length']) < 0 else int(r['length'])))
        for r in records
    )
    logger.info(f"Snapshot {path} loaded: n={n}, m={m}, {count} records")
    return DistanceOracle(pg, spts, sfi, landmarks, registry, cfg)
