"""CSV and JSON artifacts.  Report bodies are byte-stable; timings go to a sidecar."""

from __future__ import annotations

import csv
import json
import os
from datetime import datetime, timezone

import numpy as np

from .errors import Refusal

FLOAT_FMT = "%.17g"


def write_points_csv(path, states):
    """One row per accepted point: ``replicate,k,x1[,x2[,x3]],attempts`` (k from 1)."""
    states = list(states)
    d = states[0].model.domain.d if states else 1
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["replicate", "k"] + [f"x{i + 1}" for i in range(d)] + ["attempts"]) + "\n")
        for st in states:
            pts, att = st.points, st.attempt_counts
            for k in range(len(st)):
                coords = ",".join(FLOAT_FMT % v for v in pts[k])
                fh.write(f"{st.replicate_id},{k + 1},{coords},{int(att[k])}\n")


def read_points_csv(path):
    """Inverse of ``write_points_csv``: {replicate: (points, attempts)}."""
    out = {}
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 3
    for r in body:
        rep = int(r[0])
        out.setdefault(rep, ([], []))
        out[rep][0].append([float(v) for v in r[2:2 + d]])
        out[rep][1].append(int(r[-1]))
    return {k: (np.array(p).reshape(-1, d), np.array(a)) for k, (p, a) in out.items()}


def write_birth_csv(path, trajectories):
    """``replicate,k,time,rate`` for a list of (replicate_id, BirthTrajectory)."""
    with open(path, "w", newline="") as fh:
        fh.write("replicate,k,time,rate\n")
        for rid, tr in trajectories:
            for k, (t, a) in enumerate(zip(tr.times, tr.rates)):
                fh.write(f"{rid},{k + 1},{FLOAT_FMT % t},{FLOAT_FMT % a}\n")


def write_statistics_csv(path, report):
    """Per-replicate statistics as ``replicate,statistic,value``."""
    with open(path, "w", newline="") as fh:
        fh.write("replicate,statistic,value\n")
        for name, values in report.statistics.items():
            for i, v in enumerate(np.asarray(values).reshape(-1)):
                val = str(int(v)) if np.issubdtype(np.asarray(values).dtype, np.integer) else FLOAT_FMT % v
                fh.write(f"{i},{name},{val}\n")


def report_json(report) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def emit_report(report, path, meta=None):
    """Write ``report`` to ``path`` and timings to ``<stem>.meta.json`` beside it.

    Identical inputs give identical report bytes.  Returns the sidecar path.
    """
    if not report.observed:
        raise Refusal(f"report '{report.test}' has no observed statistics")
    body = report_json(report)
    with open(path, "w") as fh:
        fh.write(body)
    stem = path[:-5] if str(path).endswith(".json") else str(path)
    side = f"{stem}.meta.json"
    info = {"test": report.test, "runtime_ms": round(float(report.runtime_ms), 3),
            "written_utc": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    info.update(meta or {})
    with open(side, "w") as fh:
        json.dump(info, fh, indent=2)
        fh.write("\n")
    return side


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")
    return path
