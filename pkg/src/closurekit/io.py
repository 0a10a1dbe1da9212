"""File formats: trajectories, datasets, plain tables, atomic writes.

Binary trajectory layout (``.cftr``), all little-endian::

    magic      5 bytes  b"CFTR1"
    is_complex u8       0 = real float64 entries, 1 = complex (re, im interleaved)
    rows       u64      M
    cols       u64      N
    dt         f64
    t0         f64
    data       M*N float64 (or 2*M*N for complex), row-major
"""

import csv
import io
import json
import os
import struct
import tempfile

import numpy as np

from .systems import StateTrajectory

MAGIC = b"CFTR1"
_HEADER = struct.Struct("<5sBQQdd")


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value):
    return repr(float(value))


def table_to_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return buf.getvalue()


def write_table(path, header, columns):
    """Write equal-length numeric columns as CSV (``repr`` floats, reproducible)."""
    columns = [np.asarray(c) for c in columns]
    atomic_write(path, table_to_csv(header, zip(*columns)))


def read_table(path):
    """Read a CSV written by :func:`write_table` into ``(header, 2-D float array)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    return header, data.reshape(-1, len(header))


def trajectory_to_csv(traj):
    snaps = traj.snapshots
    t = traj.times
    if np.iscomplexobj(snaps):
        header = ["t"]
        for i in range(snaps.shape[1]):
            header += [f"x_{i}_re", f"x_{i}_im"]
        body = np.empty((snaps.shape[0], 2 * snaps.shape[1]))
        body[:, 0::2] = snaps.real
        body[:, 1::2] = snaps.imag
    else:
        header = ["t"] + [f"x_{i}" for i in range(snaps.shape[1])]
        body = snaps
    return table_to_csv(header, (np.concatenate([[ti], row]) for ti, row in zip(t, body)))


def write_trajectory_csv(path, traj):
    atomic_write(path, trajectory_to_csv(traj))


def read_trajectory_csv(path):
    header, data = read_table(path)
    t = data[:, 0]
    body = data[:, 1:]
    if len(header) > 1 and header[1].endswith("_re"):
        body = body[:, 0::2] + 1j * body[:, 1::2]
    dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
    return StateTrajectory(body, dt, float(t[0]))


def trajectory_to_bytes(traj):
    snaps = traj.snapshots
    is_complex = np.iscomplexobj(snaps)
    m, n = snaps.shape
    head = _HEADER.pack(MAGIC, int(is_complex), m, n, float(traj.dt), float(traj.t0))
    if is_complex:
        body = np.ascontiguousarray(snaps, dtype="<c16").view("<f8")
    else:
        body = np.ascontiguousarray(snaps, dtype="<f8")
    return head + body.tobytes()


def trajectory_from_bytes(raw):
    magic, is_complex, m, n, dt, t0 = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError("not a CFTR1 trajectory file")
    count = m * n * (2 if is_complex else 1)
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=_HEADER.size).copy()
    if is_complex:
        snaps = data.view("<c16").reshape(m, n)
    else:
        snaps = data.reshape(m, n)
    return StateTrajectory(snaps.astype(complex if is_complex else float), dt, t0)


def write_trajectory_binary(path, traj):
    atomic_write(path, trajectory_to_bytes(traj))


def read_trajectory_binary(path):
    with open(path, "rb") as fh:
        return trajectory_from_bytes(fh.read())


def read_trajectory(path):
    path = os.fspath(path)
    if path.endswith(".csv"):
        return read_trajectory_csv(path)
    return read_trajectory_binary(path)


def dataset_to_csv(ds):
    """Closure dataset rows ``j = 0 .. M'-1``: resolved state, its rate and the closure."""
    q = ds.q
    header = ([f"x{i}" for i in range(q)] + [f"d{i}" for i in range(q)]
              + [f"delta{i}" for i in range(q)])
    body = np.hstack([ds.X[: ds.n_rows], ds.dX, ds.Delta])
    return table_to_csv(header, body)


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
