"""Plot-ready CSV exports of fields on the configuration or position grid."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import bohm
from .lattice import ConfigurationGrid
from .mpqhd import MpqhdFieldSet
from .snapshot import WavefunctionSnapshot

_DIRS = "xyz"


def _columns(name: str, arr: np.ndarray, nu: int, rank: int) -> dict[str, np.ndarray]:
    if rank == 0:
        return {name: arr}
    if rank == 1:
        return {f"{name}_{_DIRS[a]}": arr[a] for a in range(nu)}
    return {f"{name}_{_DIRS[a]}{_DIRS[b]}": arr[a, b] for a in range(nu) for b in range(a, nu)}


def write_table(path: str | Path, coords: list[np.ndarray], coord_names: list[str],
                columns: dict[str, np.ndarray]) -> Path:
    """Rows in C order of the grid; coordinates first, then one column per field component."""
    path = Path(path)
    shape = np.broadcast_shapes(*(c.shape for c in coords))
    grids = [np.broadcast_to(c, shape).ravel() for c in coords]
    cols = [np.asarray(v, dtype=np.float64).reshape(shape).ravel() for v in columns.values()]
    table = np.column_stack(grids + cols)
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=",".join([*coord_names, *columns]), comments="")
    return path


def mpqhd_columns(fs: MpqhdFieldSet, nu: int) -> dict[str, np.ndarray]:
    out = {}
    out.update(_columns("rho", fs.rho, nu, 0))
    out.update(_columns("j", fs.j, nu, 1))
    out.update(_columns("v", fs.v, nu, 1))
    if fs.P is not None:
        out.update(_columns("P", fs.P, nu, 0))
    for name in ("pi_cl", "pi_qu", "pi", "p"):
        val = getattr(fs, name)
        if val is not None:
            out.update(_columns(name, val, nu, 2))
    out.update(_columns("f", fs.f, nu, 1))
    if fs.f_qu is not None:
        out.update(_columns("f_qu", fs.f_qu, nu, 1))
    return out


def write_mpqhd_fields(path: str | Path, fs: MpqhdFieldSet, grid: ConfigurationGrid) -> Path:
    """Single-position fields: columns ``x[, y, z]`` then rho, j, v, P, tensors (upper triangle), f, f_qu."""
    names = list(_DIRS[: grid.spatial_dim])
    return write_table(path, grid.position_coordinates(), names, mpqhd_columns(fs, grid.spatial_dim))


def write_bohm_fields(path: str | Path, psi: WavefunctionSnapshot, node_eps: float = bohm.NODE_EPS) -> Path:
    """Configuration-space fields: Q columns, then D, V_qu and per-particle w and d (NaN on the node mask)."""
    g = psi.grid
    fields = bohm.bohm_fields(psi, node_eps)
    cols = {"D": fields.D, "V_qu": fields.V_qu}
    for p in g.particles:
        tag = f"{p.sort}{p.index}"
        cols.update(_columns(f"w_{tag}", fields.w[p], g.spatial_dim, 1))
        cols.update(_columns(f"d_{tag}", fields.d[p], g.spatial_dim, 1))
    coords = [g.coordinate(a) for a in range(g.ndim)]
    return write_table(path, coords, g.axis_names(), cols)
