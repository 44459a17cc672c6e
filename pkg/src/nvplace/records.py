"""Deterministic output files and the run manifest.

Numeric files are written so that the same numbers always give the same
bytes: floats use ``repr``, JSON keys are sorted, line endings are ``\\n``.
"""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import __version__


class InputError(ValueError):
    """Unreadable or malformed input file."""


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        # JSON has no inf/nan
        return f if math.isfinite(f) else None
    return obj


def write_json(path, payload):
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def read_csv(path, required=None):
    """Rows of a header CSV as a dict of float arrays keyed by column name."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    rows = [r for r in rows if r and not r[0].startswith("#")]
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if required:
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}: missing column(s) {', '.join(missing)}; found {header}")
    cols = {h: [] for h in header}
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(r)}")
        for h, v in zip(header, r):
            try:
                cols[h].append(float(v))
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: column {h!r} is not numeric: {v!r}") from exc
    return {h: np.asarray(v) for h, v in cols.items()}


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def utc_now():
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir, command, cfg_hash, seed, started, outputs, inputs=()):
    """Record the run and a checksum for every emitted and consumed file."""
    out_dir = Path(out_dir)
    payload = {
        "command": command,
        "code_version": __version__,
        "config_hash": cfg_hash,
        "master_seed": seed,
        "started_utc": started,
        "finished_utc": utc_now(),
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
        "inputs": {str(p): sha256_file(p) for p in inputs},
    }
    return write_json(out_dir / "manifest.json", payload)
