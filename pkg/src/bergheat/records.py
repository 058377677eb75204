"""Serialization of samples and result tables.

Polar samples stream either as JSON lines or as length-prefixed binary
records: a little-endian ``uint32`` byte count followed by ``N`` (``uint32``),
``lam`` (``N`` float64) and ``U`` (``N*N`` complex128, row-major).
"""

import csv
import json
import struct

import numpy as np

from .matrix_metric import PolarBatch, PolarCoords

_LEN = struct.Struct("<I")


def polar_to_dict(p):
    return {"lam": p.lam.tolist(), "U": [[[z.real, z.imag] for z in row] for row in p.U]}


def polar_from_dict(d):
    U = np.array([[complex(re, im) for re, im in row] for row in d["U"]])
    return PolarCoords(np.asarray(d["lam"], dtype=float), U)


def write_jsonl(stream, batch):
    for p in batch:
        stream.write(json.dumps(polar_to_dict(p)) + "\n")


def read_jsonl(stream):
    coords = [polar_from_dict(json.loads(line)) for line in stream if line.strip()]
    return PolarBatch.from_coords(coords)


def _pack(p):
    N = p.lam.size
    body = struct.pack("<I", N) + p.lam.astype("<f8").tobytes() + p.U.astype("<c16").tobytes()
    return _LEN.pack(len(body)) + body


def write_records(stream, batch):
    """Append ``batch`` to a binary stream as length-prefixed records."""
    for p in batch:
        stream.write(_pack(p))


def iter_records(stream):
    while True:
        head = stream.read(_LEN.size)
        if not head:
            return
        if len(head) < _LEN.size:
            raise EOFError("truncated record header")
        (size,) = _LEN.unpack(head)
        body = stream.read(size)
        if len(body) < size:
            raise EOFError("truncated record body")
        (N,) = struct.unpack_from("<I", body)
        lam = np.frombuffer(body, "<f8", N, 4).copy()
        U = np.frombuffer(body, "<c16", N * N, 4 + 8 * N).reshape(N, N).copy()
        yield PolarCoords(lam, U)


def read_records(stream):
    return PolarBatch.from_coords(iter_records(stream))


def write_csv(path_or_stream, rows, columns):
    """Write dictionaries (or tuples) as CSV with a fixed column order."""
    def _write(fh):
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([row[c] for c in columns] if isinstance(row, dict) else list(row))

    if hasattr(path_or_stream, "write"):
        _write(path_or_stream)
    else:
        with open(path_or_stream, "w", newline="") as fh:
            _write(fh)


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and complex numbers for ``json``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj
