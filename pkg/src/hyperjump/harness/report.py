"""Consolidated summaries over one run directory or a suite of them."""

import csv
import json
from pathlib import Path

import numpy as np

from ..errors import InputError
from .io import MANIFEST, dumps, read_manifest


def _manifests(run_dir):
    run_dir = Path(run_dir)
    if (run_dir / MANIFEST).is_file():
        return [run_dir]
    return sorted(p.parent for p in run_dir.glob(f"*/{MANIFEST}"))


def _series_columns(path, x, y):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    data = np.array(rows[1:], dtype=float)
    return data[:, head.index(x)], data[:, head.index(y)]


def emit_report(run_dir):
    """Write ``summary.txt``, ``summary.json`` and ``plots/*.dat`` under ``run_dir``.

    ``run_dir`` is either a single run (holding ``manifest.json``) or a
    directory whose subdirectories are runs.  Returns the summary dict; its
    ``passed`` field is true iff every experiment passed.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise InputError(f"{run_dir} is not a directory")
    runs = _manifests(run_dir)
    if not runs:
        raise InputError(f"no {MANIFEST} in {run_dir} or its subdirectories")
    plots = run_dir / "plots"
    entries, lines = [], []
    for rd in runs:
        m = read_manifest(rd)
        tag = rd.name if rd != run_dir else m["experiment"]
        for name, s in m.get("series", {}).items():
            x, y = _series_columns(rd / s["file"], s["x"], s["y"])
            plots.mkdir(exist_ok=True)
            np.savetxt(plots / f"{tag}_{name}.dat", np.column_stack([x, y]), fmt="%.12e",
                       header=f"{s['x']} {s['y']}")
        entries.append({"run": str(rd.relative_to(run_dir)) if rd != run_dir else ".",
                        "experiment": m["experiment"], "passed": m["passed"], "exit_code": m["exit_code"],
                        "error": m.get("error"), "escalated": m.get("escalated", []),
                        "verdicts": m.get("verdicts", [])})
        status = "PASS" if m["passed"] else "FAIL"
        lines.append(f"{status}  {m['experiment']:<15} ({tag})")
        for v in m.get("verdicts", []):
            mark = {True: "ok", False: "FAILED", None: "observed"}[v["passed"]]
            lines.append(f"      {v['name']:<22} {mark}")
        if m.get("error"):
            lines.append(f"      error: {m['error']}")
        for w in m.get("escalated", []):
            lines.append(f"      escalated: {w}")
    passed = all(e["passed"] for e in entries)
    lines.append(f"{sum(e['passed'] for e in entries)}/{len(entries)} experiments passed")
    summary = {"passed": passed, "n_experiments": len(entries), "experiments": entries}
    (run_dir / "summary.json").write_text(dumps(summary))
    (run_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    return summary


def load_summary(run_dir):
    return json.loads((Path(run_dir) / "summary.json").read_text())
