"""Persistence: configuration CSV + JSON sidecars and crash-safe result rows."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .geometry import Configuration, Window


def save_configuration(config: Configuration, csv_path, meta: dict | None = None) -> Path:
    """Point list as CSV (one row per point, columns x_0..x_{d-1}) with a JSON
    sidecar holding window, model and seed metadata."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    d = config.dim
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"x_{i}" for i in range(d)])
        for p in config.points:
            writer.writerow([f"{v:.17g}" for v in p])
    sidecar = dict(meta or {})
    sidecar["window"] = {"lower": list(config.window.lower), "upper": list(config.window.upper)}
    Path(str(csv_path) + ".json").write_text(json.dumps(sidecar, indent=2), encoding="utf-8")
    return csv_path


def load_configuration(csv_path) -> Configuration:
    csv_path = Path(csv_path)
    sidecar = json.loads(Path(str(csv_path) + ".json").read_text(encoding="utf-8"))
    window = Window(tuple(sidecar["window"]["lower"]), tuple(sidecar["window"]["upper"]))
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    pts = np.asarray(rows, dtype=float).reshape(-1, len(header))
    return Configuration(pts, window)


class RowWriter:
    """Crash-safe incremental CSV writer: every row is flushed and fsynced,
    so partial results survive interruption. Values are formatted
    canonically, making reruns with an equal manifest byte-identical."""

    def __init__(self, path, fieldnames: list[str]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.fieldnames = fieldnames
        self._file = open(self.path, "w", newline="")
        self._writer = csv.DictWriter(self._file, fieldnames=fieldnames)
        self._writer.writeheader()
        self._sync()

    def _sync(self):
        self._file.flush()
        os.fsync(self._file.fileno())

    def write(self, row: dict):
        formatted = {}
        for key in self.fieldnames:
            val = row[key]
            formatted[key] = f"{val:.10g}" if isinstance(val, float) else val
        self._writer.writerow(formatted)
        self._sync()

    def close(self):
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


def read_result_csv(path) -> list[dict]:
    """Tolerant reader: raises on unreadable files so callers can skip them."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty CSV")
        rows = []
        for row in reader:
            if None in row or any(v is None for v in row.values()):
                raise ValueError(f"{path}: ragged row {row}")
            rows.append(dict(row))
    return rows
