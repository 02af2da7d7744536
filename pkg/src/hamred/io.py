"""File formats: snapshot binary, JSON sidecars, Matrix Market, CSV.

Snapshot binary layout (all little endian):

    bytes 0..7    magic "HSNP1\\0\\0\\0"
    bytes 8..15   u64 row count
    bytes 16..23  u64 column count
    byte  24      u8 velocity flag (0 absent, 1 present)
    then          rows*cols f64 state values, column major
    then          rows*cols f64 velocity values, column major (flag == 1)

CSV files are UTF-8 with LF line endings, a leading "# hamred-csv-v1"
comment, a header row, and floats formatted with %.16e so identical inputs
produce byte-identical output.
"""

import json
import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.io import mmread

MAGIC = b"HSNP1\x00\x00\x00"
CSV_VERSION = "# hamred-csv-v1"


def write_snapshot_matrix(path, states, velocities=None):
    """Write a dense matrix (and optional velocity block) in HSNP1 format."""
    states = np.asarray(states, dtype="<f8")
    if states.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    rows, cols = states.shape
    flag = 0
    if velocities is not None:
        velocities = np.asarray(velocities, dtype="<f8")
        if velocities.shape != states.shape:
            raise ValueError("velocity block must match the state shape")
        flag = 1
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(struct.pack("<B", flag))
        fh.write(np.asfortranarray(states).tobytes(order="F"))
        if flag:
            fh.write(np.asfortranarray(velocities).tobytes(order="F"))


def read_snapshot_matrix(path):
    """Read an HSNP1 file; returns (states, velocities_or_None)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic bytes {magic!r}")
        rows, cols = struct.unpack("<QQ", fh.read(16))
        (flag,) = struct.unpack("<B", fh.read(1))
        count = rows * cols
        states = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
        states = states.reshape((rows, cols), order="F").copy()
        velocities = None
        if flag == 1:
            velocities = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
            velocities = velocities.reshape((rows, cols), order="F").copy()
        elif flag != 0:
            raise ValueError(f"{path}: bad velocity flag {flag}")
    return states, velocities


def write_sidecar(path, payload):
    """Write a JSON metadata sidecar next to a binary file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_sidecar(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_matrix_market(path):
    """Read a real Matrix Market file; symmetric storage is expanded."""
    mat = mmread(str(path))
    if sp.issparse(mat):
        if np.iscomplexobj(mat.data):
            raise ValueError(f"{path}: complex matrices are not supported")
        return mat.tocsc()
    mat = np.asarray(mat)
    if np.iscomplexobj(mat):
        raise ValueError(f"{path}: complex matrices are not supported")
    return mat


def format_cell(value):
    """Deterministic CSV cell formatting (floats as %.16e)."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.16e}"
    return str(value)


def write_csv(path, header, rows):
    """Write a versioned CSV with LF endings and fixed float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_VERSION + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_cell(row[col]) for col in header) + "\n")


def read_csv(path):
    """Read a versioned CSV back into (header, list-of-dict rows of strings)."""
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    body = [line for line in lines if line and not line.startswith("#")]
    if not body:
        return [], []
    header = body[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in body[1:]]
    return header, rows
