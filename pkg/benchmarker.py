# Query benchmark harness
import logging
import time
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from graph_core import FaultSet

logger = logging.getLogger(__name__)


class Benchmarker:
    """Timed random-query runs against a built oracle"""

    def __init__(self, oracle, seed: int = 0):
        self.oracle = oracle
        self.seed = seed
        self.results: Dict = {}
        self.frame: Optional[pd.DataFrame] = None

    def random_queries(self, count: int) -> List[tuple]:
        """`count` random (s, t, fault ids) with s != t and two distinct faults where m allows"""
        rng = np.random.default_rng(self.seed)
        n, m = self.oracle.pg.n, self.oracle.graph.m
        size = min(2, m)
        queries = []
        for _ in range(count):
            s, t = (int(x) for x in rng.choice(n, size=2, replace=False)) if n > 1 else (0, 0)
            faults = tuple(int(e) for e in rng.choice(m, size=size, replace=False)) if size else ()
            queries.append((s, t, faults))
        return queries

    def run_benchmark(self, count: int) -> Dict:
        graph = self.oracle.graph
        rows = []
        for s, t, faults in self.random_queries(count):
            F = FaultSet.of(graph, faults)
            started = time.perf_counter()
            outcome = self.oracle.query(s, t, F)
            elapsed = time.perf_counter() - started
            rows.append({
                's': s,
                't': t,
                'faults': len(faults),
                'tag': self.oracle.engine.classify(s, t, F).name,
                'distance': outcome.distance,
                'probes': outcome.probes,
                'certified': outcome.certified,
                'micros': elapsed * 1e6,
            })

        self.frame = pd.DataFrame(rows, columns=['s', 't', 'faults', 'tag', 'distance',
                                                 'probes', 'certified', 'micros'])
        df = self.frame
        if df.empty:
            self.results = {'queries': 0}
            return self.results

        histogram = df['probes'].value_counts().sort_index()
        self.results = {
            'queries': int(len(df)),
            'n': self.oracle.pg.n,
            'm': graph.m,
            'entries': len(self.oracle.registry),
            'probe_max': int(df['probes'].max()),
            'probe_mean': round(float(df['probes'].mean()), 4),
            'probe_p99': float(df['probes'].quantile(0.99)),
            'probe_histogram': {int(k): int(v) for k, v in histogram.items()},
            'latency_mean_us': round(float(df['micros'].mean()), 2),
            'latency_p99_us': round(float(df['micros'].quantile(0.99)), 2),
            'certified_fraction': round(float(df['certified'].mean()), 6),
            'by_tag': {tag: int(c) for tag, c in df['tag'].value_counts().items()},
        }
        logger.info(f"Benchmark: {self.results['queries']} queries, probes max {self.results['probe_max']}")
        return self.results

    def probes_by_tag(self) -> pd.DataFrame:
        """Probe count summary per case tag"""
        if self.frame is None or self.frame.empty:
            return pd.DataFrame()
        return self.frame.groupby('tag')['probes'].agg(['count', 'mean', 'max'])

    def generate_report(self) -> str:
        if not self.results or not self.results.get('queries'):
            return "No benchmark results available"

        r = self.results
        report = "Benchmark results\n\n"
        report += f"Graph: n={r['n']}, m={r['m']}, registry entries {r['entries']}\n"
        report += f"Queries: {r['queries']}\n"
        report += f"Probes: max {r['probe_max']}, mean {r['probe_mean']:.2f}, p99 {r['probe_p99']:.0f}\n"
        report += f"Latency: mean {r['latency_mean_us']:.1f}us, p99 {r['latency_p99_us']:.1f}us\n"
        report += f"Certified: {100.0 * r['certified_fraction']:.2f}%\n\n"

        report += "Probe histogram:\n"
        peak = max(r['probe_histogram'].values())
        for probes, count in r['probe_histogram'].items():
            bar = '#' * max(1, round(40 * count / peak))
            report += f"{probes:>4} | {bar} {count}\n"
        return report
