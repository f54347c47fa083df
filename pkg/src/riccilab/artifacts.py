"""Plain-text run artifacts.

Floats are written with ``repr`` so every CSV parses back to the exact
values it was written from.  Writes go to a temporary file in the target
directory and are renamed into place.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from .flow import FlowTrace
from .geometry import WarpedProfile

TRACE_COLUMNS = ("t", "O", "P", "Q", "P_minus", "diameter", "neck_radius", "kappa_hat")
PROFILE_COLUMNS = ("snapshot", "t", "x", "phi", "psi", "material")
MANIFEST = "manifest.json"

# mkstemp creates files readable only by the owner; restore the usual mode
_UMASK = os.umask(0)
os.umask(_UMASK)


class MissingArtifact(FileNotFoundError):
    pass


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def atomic_write(path, data: str | bytes) -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write(path, csv_text(header, rows))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"missing artifact {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    return rows[0], rows[1:]


def read_columns(path, expected=None) -> dict[str, np.ndarray]:
    """Numeric CSV as a dict of float columns, optionally checking the header."""
    header, rows = read_csv(path)
    if expected is not None and tuple(header) != tuple(expected):
        raise ValueError(f"{path} has columns {header}, expected {list(expected)}")
    data = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), len(header))
    return {h: data[:, j] for j, h in enumerate(header)}


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def trace_rows(trace: FlowTrace, kappa: dict[int, float] | None = None):
    kappa = kappa or {}
    for k in range(len(trace)):
        yield (trace.times[k], trace.O[k], trace.P[k], trace.Q[k], trace.P_minus[k],
               trace.diameter[k], trace.neck_radius[k], kappa.get(k, np.nan))


def profile_rows(trace: FlowTrace):
    for k, (p, m) in enumerate(zip(trace.profiles, trace.material)):
        for j in range(p.grid.size):
            yield (k, p.time, p.grid[j], p.phi[j], p.psi[j], m[j])


def write_trace(run_dir, trace: FlowTrace, kappa: dict[int, float] | None = None) -> None:
    run_dir = Path(run_dir)
    write_csv(run_dir / "trace.csv", TRACE_COLUMNS, trace_rows(trace, kappa))
    write_csv(run_dir / "profiles.csv", PROFILE_COLUMNS, profile_rows(trace))


def load_trace(run_dir, n: int, scenario=None, status: str = "completed") -> FlowTrace:
    """Rebuild a trace from ``profiles.csv`` with the sup-norms recorded in ``trace.csv``.

    Curvature fields are recomputed from the profiles while O, P, Q, P_minus,
    diameter and neck radius are taken as recorded, so a recorded series that
    disagrees with its profiles is visible to the consistency checks.
    """
    run_dir = Path(run_dir)
    rec = read_columns(run_dir / "trace.csv", TRACE_COLUMNS)
    prof = read_columns(run_dir / "profiles.csv", PROFILE_COLUMNS)
    snap = prof["snapshot"].astype(int)
    count = int(snap.max()) + 1 if snap.size else 0
    if count != rec["t"].size:
        raise ValueError("profiles.csv and trace.csv hold different numbers of snapshots")
    cuts = np.searchsorted(snap, np.arange(count + 1))
    profiles, material = [], []
    for k in range(count):
        sl = slice(cuts[k], cuts[k + 1])
        profiles.append(WarpedProfile(n, prof["x"][sl], prof["phi"][sl], prof["psi"][sl],
                                      float(prof["t"][sl][0])))
        material.append(prof["material"][sl].copy())
    trace = FlowTrace.from_profiles(profiles, material=tuple(material), status=status,
                                    scenario=scenario)
    if not np.array_equal(trace.times, rec["t"]):
        raise ValueError("snapshot times in profiles.csv and trace.csv disagree")
    return replace(trace, O=rec["O"], P=rec["P"], Q=rec["Q"], P_minus=rec["P_minus"],
                   diameter=rec["diameter"], neck_radius=rec["neck_radius"])


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"missing artifact {path}")
    return json.loads(path.read_text())
