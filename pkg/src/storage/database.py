"""
SQLite cache of trained scalar codebooks
"""

import json
import sqlite3
import threading
from typing import Any, Dict, List, Optional

from quantizer.scalar import Codebook1D
from storage.artifacts import codebook_from_dict, codebook_to_dict, to_json


class CodebookCache:
    def __init__(self, db_path: str = ":memory:"):
        self.db_path = db_path
        self.conn = None
        self._lock = threading.Lock()

    def initialize(self):
        """Open the database and create tables."""
        self.conn = sqlite3.connect(self.db_path, check_same_thread=False)
        self._create_tables()

    def _create_tables(self):
        self.conn.execute("""
            CREATE TABLE IF NOT EXISTS codebooks (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                created DATETIME DEFAULT CURRENT_TIMESTAMP,
                density_id TEXT NOT NULL,
                r REAL NOT NULL,
                n INTEGER NOT NULL,
                residual REAL,
                payload TEXT NOT NULL,  -- codebook JSON, 17-digit floats
                UNIQUE (density_id, r, n)
            )
        """)
        self.conn.execute("CREATE INDEX IF NOT EXISTS idx_codebooks_density ON codebooks(density_id, r)")
        self.conn.commit()

    def get(self, density_id: str, r: float, n: int) -> Optional[Codebook1D]:
        """Cached codebook for (density, r, n), or None."""
        if not self.conn:
            self.initialize()
        with self._lock:
            row = self.conn.execute(
                "SELECT payload FROM codebooks WHERE density_id = ? AND r = ? AND n = ?",
                (density_id, float(r), int(n)),
            ).fetchone()
        return codebook_from_dict(json.loads(row[0])) if row else None

    def put(self, codebook: Codebook1D):
        if not self.conn:
            self.initialize()
        with self._lock:
            self.conn.execute("""
                INSERT OR REPLACE INTO codebooks (density_id, r, n, residual, payload)
                VALUES (?, ?, ?, ?, ?)
            """, (codebook.density_id, float(codebook.r), codebook.n, float(codebook.residual),
                  to_json(codebook_to_dict(codebook))))
            self.conn.commit()

    def entries(self, density_id: Optional[str] = None) -> List[Dict[str, Any]]:
        """Cached (density, r, n) keys, optionally for one density."""
        if not self.conn:
            self.initialize()
        query = "SELECT density_id, r, n, residual, created FROM codebooks"
        params: tuple = ()
        if density_id is not None:
            query += " WHERE density_id = ?"
            params = (density_id,)
        with self._lock:
            cursor = self.conn.execute(query + " ORDER BY density_id, r, n", params)
            columns = [description[0] for description in cursor.description]
            return [dict(zip(columns, row)) for row in cursor.fetchall()]

    def close(self):
        """Close database connection."""
        if self.conn:
            self.conn.close()
            self.conn = None
