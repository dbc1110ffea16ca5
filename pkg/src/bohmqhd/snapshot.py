"""Wavefunction snapshots and the binary series format.

File layout (all integers little-endian)::

    offset  size  content
    0       8     magic  b"BQHDSNAP"
    8       1     byte-order tag, b"<" (little-endian payload); anything else is rejected
    9       1     format version (currently 1)
    10      2     reserved, zero
    12      8     uint64 header length H in bytes
    20      H     UTF-8 JSON header
    20+H    ...   frames, each prod(shape) complex numbers in C order

The JSON header holds ``grid`` (see :meth:`ConfigurationGrid.to_dict`),
``dtype`` (``"complex64"`` or ``"complex128"``), ``shape``, ``times`` (one per
frame) and optional ``hbar``.  Each complex value is stored as two IEEE
floats (real, imaginary) of the given width, little-endian.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .lattice import ConfigurationGrid

MAGIC = b"BQHDSNAP"
VERSION = 1
_PREFIX = struct.Struct("<8scBxxQ")

_DTYPES = {"complex64": np.dtype("<c8"), "complex128": np.dtype("<c16")}


class SnapshotFormatError(ValueError):
    pass


class BoundaryLeakError(RuntimeError):
    """The wavefunction reaches the edge of the periodic box."""


@dataclass
class WavefunctionSnapshot:
    """Complex amplitude Psi(Q, t) on a configuration grid."""

    grid: ConfigurationGrid
    t: float
    values: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"snapshot shape {self.values.shape} != grid shape {self.grid.shape}")

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def replace(self, values: np.ndarray, t: float | None = None) -> "WavefunctionSnapshot":
        return WavefunctionSnapshot(self.grid, self.t if t is None else t, values, self.hbar)

    def astype(self, dtype) -> "WavefunctionSnapshot":
        return self.replace(self.values.astype(dtype))


@dataclass
class SnapshotSeries:
    """Uniformly spaced snapshots of one run."""

    snapshots: list[WavefunctionSnapshot] = field(default_factory=list)

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, i) -> WavefunctionSnapshot:
        return self.snapshots[i]

    def __iter__(self):
        return iter(self.snapshots)

    @property
    def grid(self) -> ConfigurationGrid:
        return self.snapshots[0].grid

    @property
    def hbar(self) -> float:
        return self.snapshots[0].hbar

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def dt(self) -> float:
        """Uniform spacing of the stored times; raises if the series is not uniform."""
        t = self.times
        if t.size < 2:
            raise ValueError("need at least two snapshots for a time step")
        steps = np.diff(t)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12 * max(1.0, abs(t).max())):
            raise ValueError("snapshot times are not uniformly spaced")
        return float(steps.mean())

    def check_centered(self, index: int) -> int:
        """Validate that ``index`` has a neighbour on each side; supports negative indices."""
        if len(self) < 3:
            raise ValueError("central time differences need at least 3 snapshots")
        i = index % len(self)
        if i == 0 or i == len(self) - 1:
            raise ValueError(f"snapshot {index} has no neighbour on both sides")
        self.dt
        return i


def write_series(path: str | Path, series: Sequence[WavefunctionSnapshot], dtype: str = "complex128") -> Path:
    """Write snapshots (sharing one grid) to ``path`` in the documented layout."""
    if dtype not in _DTYPES:
        raise SnapshotFormatError(f"unsupported dtype {dtype!r}")
    snaps = list(series)
    if not snaps:
        raise SnapshotFormatError("cannot write an empty series")
    grid = snaps[0].grid
    for s in snaps:
        if s.grid != grid:
            raise SnapshotFormatError("all snapshots must share one grid")
    header = {
        "grid": grid.to_dict(),
        "dtype": dtype,
        "shape": list(grid.shape),
        "times": [float(s.t) for s in snaps],
        "hbar": float(snaps[0].hbar),
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, b"<", VERSION, len(hb)))
        fh.write(hb)
        for s in snaps:
            fh.write(np.ascontiguousarray(s.values, dtype=_DTYPES[dtype]).tobytes())
    return path


def read_series(path: str | Path) -> SnapshotSeries:
    """Read a file written by :func:`write_series` (or any producer of the layout)."""
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise SnapshotFormatError(f"file is {len(raw)} bytes, shorter than the {_PREFIX.size}-byte prefix")
    magic, order, version, hlen = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic bytes {magic!r}, expected {MAGIC!r}")
    if order != b"<":
        raise SnapshotFormatError(f"unsupported byte order tag {order!r}; only little-endian ('<') payloads are accepted")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported format version {version}")
    start = _PREFIX.size + hlen
    if len(raw) < start:
        raise SnapshotFormatError("file truncated inside the JSON header")
    try:
        header = json.loads(raw[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotFormatError(f"unreadable header: {exc}") from exc
    grid = ConfigurationGrid.from_dict(header["grid"])
    shape = tuple(header["shape"])
    if shape != grid.shape:
        raise SnapshotFormatError(f"header shape {shape} does not match grid shape {grid.shape}")
    if header["dtype"] not in _DTYPES:
        raise SnapshotFormatError(f"unsupported dtype {header['dtype']!r}")
    dt = _DTYPES[header["dtype"]]
    times = [float(t) for t in header["times"]]
    frame = int(np.prod(shape)) * dt.itemsize
    expected = start + frame * len(times)
    if len(raw) != expected:
        raise SnapshotFormatError(
            f"payload length mismatch: file has {len(raw)} bytes, layout requires {expected}"
        )
    hbar = float(header.get("hbar", 1.0))
    snaps = []
    for k, t in enumerate(times):
        arr = np.frombuffer(raw, dtype=dt, count=int(np.prod(shape)), offset=start + k * frame)
        snaps.append(WavefunctionSnapshot(grid, t, arr.reshape(shape).astype(dt.newbyteorder("=")), hbar))
    series = SnapshotSeries(snaps)
    if len(series) > 1:
        try:
            series.dt
        except ValueError as exc:
            raise SnapshotFormatError(str(exc)) from exc
    return series
