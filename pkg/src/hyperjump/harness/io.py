"""Run directories: deterministic CSV/JSON writers and the manifest."""

import hashlib
import json
import platform
import time
from pathlib import Path

import numpy as np

from .. import __version__

MANIFEST = "manifest.json"
FLOAT_FMT = "%.12e"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class RunDir:
    """An output directory that remembers every file written through it."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.series = {}

    def _track(self, rel):
        rel = str(rel)
        if rel not in self.files:
            self.files.append(rel)
        return self.path / rel

    def write_csv(self, name, columns):
        """``columns`` maps header names to equal-length arrays; complex columns split into re/im."""
        head, cols = [], []
        for key, val in columns.items():
            val = np.asarray(val)
            if np.iscomplexobj(val):
                head += [f"re_{key}", f"im_{key}"]
                cols += [val.real, val.imag]
            else:
                head.append(key)
                cols.append(val.astype(float))
        path = self._track(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(head),
                   comments="", fmt=FLOAT_FMT)
        return path

    def write_json(self, name, obj):
        path = self._track(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(obj))
        return path

    def add_files(self, paths):
        for p in paths:
            self._track(Path(p).resolve().relative_to(self.path.resolve()))

    def add_series(self, name, csv, x, y):
        """Register a figure-worthy series as two columns of an emitted CSV."""
        self.series[name] = {"file": str(csv), "x": x, "y": y}

    def write_manifest(self, config, verdicts, warnings, escalated, wall_time, exit_code, error=None):
        inventory = []
        for rel in self.files:
            p = self.path / rel
            inventory.append({"path": rel, "sha256": sha256(p), "bytes": p.stat().st_size})
        manifest = {
            "experiment": config.get("experiment"),
            "config": {k: v for k, v in config.items() if not k.startswith("_")},
            "code_version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "wall_time_s": wall_time,
            "warnings": list(warnings),
            "escalated": list(escalated),
            "verdicts": verdicts,
            "passed": exit_code == 0,
            "exit_code": exit_code,
            "error": error,
            "series": self.series,
            "files": inventory,
        }
        path = self.path / MANIFEST
        path.write_text(dumps(manifest))
        return path


def read_manifest(path):
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    return json.loads(path.read_text())


def verify_manifest(run_dir):
    """Paths whose checksum no longer matches the manifest."""
    run_dir = Path(run_dir)
    m = read_manifest(run_dir)
    return [f["path"] for f in m["files"] if sha256(run_dir / f["path"]) != f["sha256"]]
