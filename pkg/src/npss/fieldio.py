"""Binary field snapshots.

Layout (little-endian, normative): magic ``NPSSFLD1`` (8 bytes), u32 n,
u32 N, the n x n lattice matrix A as float64 row-major, then the M = N^n
field values as float64 in grid-lexicographic order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .lattice import Grid, make_reciprocal

__all__ = ["MAGIC", "write_field", "read_field"]

MAGIC = b"NPSSFLD1"


def write_field(path, grid: Grid, values: np.ndarray) -> None:
    """Serialize one real field and its grid geometry."""
    values = np.asarray(values, dtype="<f8").reshape(-1)
    if values.size != grid.M:
        raise ValueError(f"field has {values.size} values, grid expects {grid.M}")
    A = np.asarray(grid.basis.A, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", grid.n, grid.N))
        fh.write(np.ascontiguousarray(A).tobytes())
        fh.write(np.ascontiguousarray(values).tobytes())


def read_field(path) -> tuple[Grid, np.ndarray]:
    """Read a snapshot back as (grid, values); bit-exact round trip."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise ValueError(f"{path}: not an NPSSFLD1 snapshot")
    n, N = struct.unpack("<II", raw[8:16])
    head = 16 + 8 * n * n
    A = np.frombuffer(raw[16:head], dtype="<f8").reshape(n, n)
    grid = Grid(basis=make_reciprocal(A), N=int(N))
    values = np.frombuffer(raw[head:], dtype="<f8")
    if values.size != grid.M:
        raise ValueError(f"{path}: expected {grid.M} values, found {values.size}")
    return grid, values.copy()
