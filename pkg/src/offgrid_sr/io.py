"""File formats: measure and observation CSVs, binary factor dumps, trace CSVs.

Every floating-point number is written with 17 significant digits so that
files round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from pathlib import Path

import numpy as np

from .measures import DiscreteMeasure

STATE_MAGIC = b"OFFGRID-SR-U\x00\x01\x00\x00"
assert len(STATE_MAGIC) == 16


def fmt(x) -> str:
    return "%.17g" % x


def _open_w(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _open_r(path, mode="r"):
    path = Path(path)
    try:
        if "b" in mode:
            return open(path, mode)
        return open(path, mode, encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc


def write_measure_csv(path, m: DiscreteMeasure) -> None:
    """Header ``x1,...,xd,amp_re,amp_im``, one atom per row."""
    with _open_w(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(m.dim)] + ["amp_re", "amp_im"])
        for p, a in zip(m.positions, m.amplitudes):
            w.writerow([fmt(v) for v in p] + [fmt(a.real), fmt(a.imag)])


def read_measure_csv(path) -> DiscreteMeasure:
    with _open_r(path) as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    head = [h.strip() for h in rows[0]]
    d = len(head) - 2
    if d < 1 or head[-2:] != ["amp_re", "amp_im"] or head[:d] != [f"x{i + 1}" for i in range(d)]:
        raise ValueError(f"{path}: bad header {head}")
    body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, d + 2)
    return DiscreteMeasure(body[:, :d], body[:, d] + 1j * body[:, d + 1], d)


def write_observation_csv(path, y: np.ndarray) -> None:
    with _open_w(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["re", "im"])
        for v in np.asarray(y, complex):
            w.writerow([fmt(v.real), fmt(v.imag)])


def read_observation_csv(path) -> np.ndarray:
    with _open_r(path) as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["re", "im"]:
        raise ValueError(f"{path}: expected header re,im")
    body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, 2)
    return body[:, 0] + 1j * body[:, 1]


def write_state(path, U: np.ndarray) -> None:
    """Little-endian dump: 16-byte magic, two int64 dims, row-major complex128 entries."""
    U = np.ascontiguousarray(U, dtype="<c16")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(STATE_MAGIC)
            fh.write(struct.pack("<qq", *U.shape))
            fh.write(U.tobytes(order="C"))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_state(path) -> np.ndarray:
    with _open_r(path, "rb") as fh:
        data = fh.read()
    if data[:16] != STATE_MAGIC:
        raise ValueError(f"{path}: not a factor dump (bad magic)")
    rows, cols = struct.unpack("<qq", data[16:32])
    body = np.frombuffer(data[32:], dtype="<c16")
    if body.size != rows * cols:
        raise ValueError(f"{path}: expected {rows}x{cols} entries, found {body.size}")
    return body.reshape(rows, cols).astype(complex)


def write_state_csv(path, U: np.ndarray) -> None:
    """Debugging dump: one row per matrix row, columns ``re_j,im_j``."""
    U = np.asarray(U, complex)
    with _open_w(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{p}_{j}" for j in range(U.shape[1]) for p in ("re", "im")])
        for row in U:
            w.writerow([fmt(v) for a in row for v in (a.real, a.imag)])


def write_rows_csv(path, header, rows) -> None:
    """Rows of numbers/strings; floats use 17 significant digits."""
    with _open_w(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_rows_csv(path) -> tuple[list, list]:
    with _open_r(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def write_json(path, obj) -> None:
    with _open_w(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def read_json(path) -> dict:
    with _open_r(path) as fh:
        return json.load(fh)


def thread_cap(requested: int) -> int:
    """Cap a parallelism request by ``OFFGRID_SR_THREADS`` when set."""
    cap = os.environ.get("OFFGRID_SR_THREADS")
    n = max(1, int(requested))
    if cap:
        n = min(n, max(1, int(cap)))
    return n
