import hashlib
import json
import logging
import sqlite3
from contextlib import contextmanager
from datetime import datetime
from typing import Dict, List, Optional

from config import config

logger = logging.getLogger(__name__)


def graph_digest(edges) -> str:
    """Stable short digest of an edge list"""
    h = hashlib.sha256()
    for u, v in edges:
        h.update(f"{u},{v};".encode())
    return h.hexdigest()[:16]


class RunDatabase:
    """Ledger of oracle builds and verification / benchmark reports"""

    def __init__(self, db_path: Optional[str] = None):
        self.db_path = db_path or config.db_path
        self.init_database()

    @contextmanager
    def get_connection(self):
        """Context manager for database connections"""
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        try:
            yield conn
        finally:
            conn.close()

    def init_database(self):
        try:
            with self.get_connection() as conn:
                cursor = conn.cursor()

                cursor.execute('''
                    CREATE TABLE IF NOT EXISTS builds (
                        id INTEGER PRIMARY KEY AUTOINCREMENT,
                        digest TEXT NOT NULL,
                        n INTEGER NOT NULL,
                        m INTEGER NOT NULL,
                        seed INTEGER NOT NULL,
                        entries INTEGER NOT NULL,
                        variants TEXT,
                        wall_seconds REAL,
                        timestamp TEXT
                    )
                ''')

                cursor.execute('''
                    CREATE TABLE IF NOT EXISTS reports (
                        id INTEGER PRIMARY KEY AUTOINCREMENT,
                        kind TEXT NOT NULL,
                        digest TEXT,
                        summary TEXT NOT NULL,
                        payload TEXT,
                        timestamp TEXT
                    )
                ''')

                conn.commit()
                logger.debug(f"Run database ready at {self.db_path}")

        except Exception as e:
            logger.error(f"Error initializing database: {e}")
            raise

    def record_build(self, digest: str, stats: Dict) -> int:
        """Store one build row from `BuildStats.to_dict()`; returns the row id"""
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('''
                INSERT INTO builds (digest, n, m, seed, entries, variants, wall_seconds, timestamp)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?)
            ''', (
                digest,
                stats['n'],
                stats['m'],
                stats['seed'],
                stats['entries'],
                json.dumps(stats.get('variants', {}), sort_keys=True),
                stats.get('wall_seconds', 0.0),
                datetime.now().isoformat(),
            ))
            conn.commit()
            logger.info(f"Build of {digest} recorded ({stats['entries']} entries)")
            return cursor.lastrowid

    def record_report(self, kind: str, summary: str, payload: Optional[Dict] = None,
                      digest: Optional[str] = None) -> int:
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('''
                INSERT INTO reports (kind, digest, summary, payload, timestamp)
                VALUES (?, ?, ?, ?, ?)
            ''', (kind, digest, summary, json.dumps(payload, sort_keys=True) if payload else None,
                  datetime.now().isoformat()))
            conn.commit()
            return cursor.lastrowid

    def list_builds(self, limit: int = 20) -> List[Dict]:
        try:
            with self.get_connection() as conn:
                cursor = conn.cursor()
                cursor.execute('SELECT * FROM builds ORDER BY id DESC LIMIT ?', (limit,))
                rows = []
                for row in cursor.fetchall():
                    item = dict(row)
                    item['variants'] = json.loads(item['variants']) if item['variants'] else {}
                    rows.append(item)
                return rows

        except Exception as e:
            logger.error(f"Error listing builds: {e}")
            return []

    def list_reports(self, kind: Optional[str] = None, limit: int = 20) -> List[Dict]:
        try:
            with self.get_connection() as conn:
                cursor = conn.cursor()
                if kind:
                    cursor.execute('SELECT * FROM reports WHERE kind = ? ORDER BY id DESC LIMIT ?', (kind, limit))
                else:
                    cursor.execute('SELECT * FROM reports ORDER BY id DESC LIMIT ?', (limit,))
                return [dict(row) for row in cursor.fetchall()]

        except Exception as e:
            logger.error(f"Error listing reports: {e}")
            return []
