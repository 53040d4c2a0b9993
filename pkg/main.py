import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from benchmarker import Benchmarker
from config import Config, config
from database import RunDatabase, graph_digest
from graph_generator import GENERATOR_KINDS, generate, write_edge_list
from graph_core import read_graph_file
from oracle import DistanceOracle, build_oracle
from snapshot import MAGIC, load_snapshot, save_snapshot
from verifier import VerifyLimits, verify_exhaustive, verify_sampled

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_ERROR = 2


def setup_logging(cfg: Config):
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, cfg.log_level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(Path(cfg.output_dir) / 'oracle.log'),
            logging.StreamHandler(sys.stdout)
        ]
    )


def _out_path(args, cfg: Config, default: str) -> Path:
    return Path(args.out) if args.out else Path(cfg.output_dir) / default


def _load_oracle(path: str, cfg: Config) -> DistanceOracle:
    """A snapshot is loaded as is; anything else is read as a graph file and built"""
    with open(path, 'rb') as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return load_snapshot(path, cfg)
    return build_oracle(read_graph_file(path), cfg)


def _parse_fault(text: str) -> tuple:
    for sep in (',', '-', ':'):
        if sep in text:
            u, v = text.split(sep, 1)
            return int(u), int(v)
    raise ValueError(f"fault {text!r} is not of the form u,v")


def cmd_generate(args, cfg: Config) -> int:
    graph = generate(args.kind, args.n, args.param, cfg.seed)
    out = write_edge_list(graph, _out_path(args, cfg, f"{args.kind}_{args.n}.txt"))
    print(out)
    return EXIT_OK


def cmd_build(args, cfg: Config) -> int:
    graph = read_graph_file(args.graph)
    oracle = build_oracle(graph, cfg)
    out = save_snapshot(oracle, _out_path(args, cfg, 'oracle.snap'))
    stats = oracle.stats.to_dict()
    RunDatabase(cfg.db_path).record_build(graph_digest(graph.edges), stats)
    print(json.dumps(stats, indent=2, sort_keys=True))
    print(out)
    return EXIT_OK


def cmd_query(args, cfg: Config) -> int:
    oracle = _load_oracle(args.snapshot, cfg)
    n = oracle.pg.n
    for v in (args.s, args.t):
        if not 0 <= v < n:
            raise ValueError(f"vertex {v} out of range [0, {n})")
    faults = [_parse_fault(f) for f in args.faults]
    for u, v in faults:
        if not oracle.graph.has_edge(u, v):
            raise ValueError(f"({u}, {v}) is not an edge of the graph")
    outcome = oracle.query(args.s, args.t, faults)
    print("INF" if outcome.distance == float('inf') else int(outcome.distance))
    print(f"probes={outcome.probes} certified={str(outcome.certified).lower()}")
    return EXIT_OK


def cmd_verify(args, cfg: Config) -> int:
    oracle = _load_oracle(args.snapshot, cfg)
    if args.sample:
        report = verify_sampled(oracle.pg, oracle, args.sample, seed=cfg.seed,
                                instrument=not args.no_instrument)
    else:
        limits = VerifyLimits(max_faults=args.max_faults, instrument=not args.no_instrument, jobs=cfg.jobs)
        report = verify_exhaustive(oracle.pg, oracle, limits)

    out = _out_path(args, cfg, 'verify_report.json')
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json())
    summary = report.summary()
    RunDatabase(cfg.db_path).record_report('verify', summary, report.to_dict(),
                                           graph_digest(oracle.graph.edges))
    print(summary)
    if report.mismatches or report.soundness_violations:
        logger.warning(f"Verification found {report.mismatches} mismatches")
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_bench(args, cfg: Config) -> int:
    oracle = _load_oracle(args.snapshot, cfg)
    bench = Benchmarker(oracle, seed=cfg.seed)
    results = bench.run_benchmark(args.queries)

    out = _out_path(args, cfg, 'bench_report.json')
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(results, indent=2, sort_keys=True))
    text = bench.generate_report()
    RunDatabase(cfg.db_path).record_report('bench', text.splitlines()[0] if results.get('queries') else text,
                                           results, graph_digest(oracle.graph.edges))
    print(text)
    return EXIT_OK


def cmd_stats(args, cfg: Config) -> int:
    db = RunDatabase(cfg.db_path)
    builds = db.list_builds(args.limit)
    reports = db.list_reports(limit=args.limit)
    print(f"Builds ({len(builds)}):")
    for b in builds:
        print(f"  #{b['id']} {b['timestamp']} graph {b['digest']} n={b['n']} m={b['m']} "
              f"seed={b['seed']} entries={b['entries']} wall={b['wall_seconds']}s")
    print(f"Reports ({len(reports)}):")
    for r in reports:
        print(f"  #{r['id']} {r['timestamp']} {r['kind']}: {r['summary']}")
    return EXIT_OK


COMMANDS = {
    'generate': cmd_generate,
    'build': cmd_build,
    'query': cmd_query,
    'verify': cmd_verify,
    'bench': cmd_bench,
    'stats': cmd_stats,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int)
    common.add_argument('--landmark-c', type=float)
    common.add_argument('--epsilon', type=float)
    common.add_argument('--strict', action='store_true', help='disable hardened-mode fallbacks')
    common.add_argument('--mem-cap', type=int)
    common.add_argument('--jobs', type=int)
    common.add_argument('--db', help='run ledger path (defaults to DB_PATH)')
    common.add_argument('--out', help='output file')

    parser = argparse.ArgumentParser(prog='dfto', description='Dual fault-tolerant distance oracle')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('generate', parents=[common], help='write a generated graph as an edge list')
    p.add_argument('kind', choices=GENERATOR_KINDS)
    p.add_argument('n', type=int)
    p.add_argument('param', type=float, nargs='?', default=0.0, help='p for gnp, columns for grid, chords')

    p = sub.add_parser('build', parents=[common], help='build every index and write a snapshot')
    p.add_argument('graph')

    p = sub.add_parser('query', parents=[common], help='distance from s to t avoiding up to two edges')
    p.add_argument('snapshot')
    p.add_argument('s', type=int)
    p.add_argument('t', type=int)
    p.add_argument('faults', nargs='*', help='failed edges as u,v')

    p = sub.add_parser('verify', parents=[common], help='compare answers with BFS on G - F')
    p.add_argument('snapshot')
    p.add_argument('--max-faults', type=int, default=2)
    p.add_argument('--sample', type=int, help='random queries instead of the exhaustive sweep')
    p.add_argument('--no-instrument', action='store_true')

    p = sub.add_parser('bench', parents=[common], help='timed random queries')
    p.add_argument('snapshot')
    p.add_argument('--queries', type=int, default=10_000)

    p = sub.add_parser('stats', parents=[common], help='list recorded builds and reports')
    p.add_argument('--limit', type=int, default=20)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config.with_overrides(
            seed=args.seed, landmark_c=args.landmark_c, epsilon=args.epsilon,
            hardened=False if args.strict else None, mem_cap_entries=args.mem_cap,
            jobs=args.jobs, db_path=args.db,
        )
    except Exception as e:
        print(f"Invalid configuration: {e}", file=sys.stderr)
        return EXIT_ERROR

    setup_logging(cfg)
    try:
        return COMMANDS[args.command](args, cfg)
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
