"""Periodic configuration-space grids and spectral calculus on them.

A configuration grid stores every particle coordinate on its own block of
``spatial_dim`` consecutive array axes, ordered sort by sort and particle by
particle (the usual ``Q = (q_1^1, ..., q_N(1)^1, q_1^2, ...)`` layout).  All
particles share one position grid so that single-particle fields of different
sorts can be added pointwise.

Derivatives are discrete-Fourier derivatives.  The Nyquist mode is dropped in
every derivative (first and second order alike) so that
``divergence(gradient(f)) == laplacian(f)`` holds to rounding.  The transforms
go through :mod:`scipy.fft`, which keeps ``longdouble`` inputs in extended
precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
import scipy.fft as sfft

MAX_AXES = 4


class GridError(ValueError):
    """Raised for inconsistent grids, unknown particles or bad field shapes."""


@dataclass(frozen=True)
class SortSpec:
    """One species of indistinguishable particles."""

    label: str
    count: int
    mass: float = 1.0

    def __post_init__(self):
        if not self.label:
            raise GridError("sort label must be non-empty")
        if int(self.count) < 1:
            raise GridError(f"sort {self.label!r}: count must be >= 1")
        if not (float(self.mass) > 0.0 and np.isfinite(self.mass)):
            raise GridError(f"sort {self.label!r}: mass must be positive")


@dataclass(frozen=True, order=True)
class ParticleIndex:
    """Particle ``index`` (1-based) of sort ``sort``."""

    sort: str
    index: int = 1


@dataclass(frozen=True)
class AxisSpec:
    """Uniform periodic axis ``[lo, hi)`` with ``n`` points."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not self.hi > self.lo:
            raise GridError(f"axis extent must satisfy hi > lo, got [{self.lo}, {self.hi}]")
        if self.n < 2 or (self.n & (self.n - 1)):
            raise GridError(f"axis point count must be a power of two >= 2, got {self.n}")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.n

    def points(self, dtype=np.float64) -> np.ndarray:
        lo, length = np.asarray(self.lo, dtype=dtype), np.asarray(self.length, dtype=dtype)
        return lo + length * np.arange(self.n, dtype=dtype) / self.n

    def wavenumbers(self, dtype=np.float64) -> np.ndarray:
        """Angular wavenumbers in FFT order, Nyquist mode set to zero."""
        n = self.n
        m = np.fft.fftfreq(n, d=1.0 / n)  # integer mode numbers
        m[n // 2] = 0.0
        two_pi = 2 * np.arccos(np.asarray(-1, dtype=dtype))
        return m.astype(dtype) * (two_pi / np.asarray(self.length, dtype=dtype))

    def full_wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers in FFT order including the Nyquist mode."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)


@dataclass(frozen=True)
class ConfigurationGrid:
    """Discretized configuration space of all particles of all sorts.

    ``position_axes`` holds one :class:`AxisSpec` per spatial direction; every
    particle uses the same position axes.
    """

    sorts: tuple[SortSpec, ...]
    position_axes: tuple[AxisSpec, ...]
    max_axes: int = MAX_AXES

    def __post_init__(self):
        object.__setattr__(self, "sorts", tuple(self.sorts))
        object.__setattr__(self, "position_axes", tuple(self.position_axes))
        if not self.sorts:
            raise GridError("at least one sort is required")
        labels = [s.label for s in self.sorts]
        if len(set(labels)) != len(labels):
            raise GridError(f"sort labels must be unique, got {labels}")
        if len(self.position_axes) not in (1, 2, 3):
            raise GridError("spatial dimension must be 1, 2 or 3")
        if self.ndim > self.max_axes:
            raise GridError(
                f"configuration space has {self.ndim} axes, above the cap of {self.max_axes}"
            )

    @classmethod
    def uniform(cls, sorts: Sequence[SortSpec], lo: float, hi: float, n: int,
                spatial_dim: int = 1, max_axes: int = MAX_AXES) -> "ConfigurationGrid":
        axis = AxisSpec(lo, hi, n)
        return cls(tuple(sorts), (axis,) * spatial_dim, max_axes=max_axes)

    # -- layout -------------------------------------------------------------

    @property
    def spatial_dim(self) -> int:
        return len(self.position_axes)

    @cached_property
    def particles(self) -> tuple[ParticleIndex, ...]:
        return tuple(ParticleIndex(s.label, i + 1) for s in self.sorts for i in range(s.count))

    @property
    def n_particles(self) -> int:
        return len(self.particles)

    @property
    def ndim(self) -> int:
        return self.spatial_dim * sum(s.count for s in self.sorts)

    @property
    def axes(self) -> tuple[AxisSpec, ...]:
        return self.position_axes * self.n_particles

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.n for a in self.axes)

    @property
    def position_shape(self) -> tuple[int, ...]:
        return tuple(a.n for a in self.position_axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod([a.spacing for a in self.axes]))

    @property
    def position_cell_volume(self) -> float:
        return float(np.prod([a.spacing for a in self.position_axes]))

    @property
    def position_volume(self) -> float:
        return float(np.prod([a.length for a in self.position_axes]))

    @property
    def volume(self) -> float:
        return self.position_volume ** self.n_particles

    def sort(self, label: str) -> SortSpec:
        for s in self.sorts:
            if s.label == label:
                return s
        raise GridError(f"unknown sort {label!r}")

    def mass(self, p: ParticleIndex) -> float:
        return float(self.sort(p.sort).mass)

    def particle_number(self, p: ParticleIndex) -> int:
        """Position of ``p`` in Q-order (0-based)."""
        try:
            return self.particles.index(p)
        except ValueError:
            raise GridError(f"unknown particle {p}") from None

    def axes_of(self, p: ParticleIndex) -> tuple[int, ...]:
        """Array axes holding the coordinates of ``p``."""
        k = self.particle_number(p) * self.spatial_dim
        return tuple(range(k, k + self.spatial_dim))

    def particles_of(self, label: str) -> tuple[ParticleIndex, ...]:
        self.sort(label)
        return tuple(p for p in self.particles if p.sort == label)

    def axis_names(self) -> list[str]:
        """Column names in Q-order, e.g. ``A1``, ``B1`` (nu=1) or ``A1_x``, ``A1_y``."""
        if self.spatial_dim == 1:
            return [f"{p.sort}{p.index}" for p in self.particles]
        return [f"{p.sort}{p.index}_{d}" for p in self.particles for d in "xyz"[: self.spatial_dim]]

    def iter_blocks(self) -> Iterator[tuple[ParticleIndex, tuple[int, ...]]]:
        for p in self.particles:
            yield p, self.axes_of(p)

    # -- coordinates --------------------------------------------------------

    def coordinate(self, axis: int, dtype=np.float64) -> np.ndarray:
        """Coordinate values along ``axis``, shaped to broadcast over the grid."""
        pts = self.axes[axis].points(dtype)
        shape = [1] * self.ndim
        shape[axis] = pts.size
        return pts.reshape(shape)

    def particle_coordinates(self, p: ParticleIndex, dtype=np.float64) -> list[np.ndarray]:
        return [self.coordinate(ax, dtype) for ax in self.axes_of(p)]

    def position_coordinates(self, dtype=np.float64) -> list[np.ndarray]:
        """Broadcastable coordinates of the single-position grid."""
        out = []
        for a, ax in enumerate(self.position_axes):
            shape = [1] * self.spatial_dim
            shape[a] = ax.n
            out.append(ax.points(dtype).reshape(shape))
        return out

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.cell_volume)

    def with_points(self, n: int) -> "ConfigurationGrid":
        """Same box, ``n`` points per axis."""
        axes = tuple(AxisSpec(a.lo, a.hi, n) for a in self.position_axes)
        return ConfigurationGrid(self.sorts, axes, max_axes=self.max_axes)

    def to_dict(self) -> dict:
        return {
            "sorts": [{"label": s.label, "count": s.count, "mass": s.mass} for s in self.sorts],
            "axes": [{"lo": a.lo, "hi": a.hi, "n": a.n} for a in self.position_axes],
            "max_axes": self.max_axes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConfigurationGrid":
        sorts = tuple(SortSpec(s["label"], int(s["count"]), float(s["mass"])) for s in d["sorts"])
        axes = tuple(AxisSpec(float(a["lo"]), float(a["hi"]), int(a["n"])) for a in d["axes"])
        return cls(sorts, axes, max_axes=int(d.get("max_axes", MAX_AXES)))


# ---------------------------------------------------------------------------
# spectral derivatives


def _check_field(values: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    values = np.asarray(values)
    if values.shape != tuple(shape):
        raise GridError(f"field shape {values.shape} does not match grid shape {tuple(shape)}")
    if not np.all(np.isfinite(values)):
        raise GridError("field contains non-finite values")
    return values


def _real_dtype(values: np.ndarray):
    return np.longdouble if values.dtype in (np.longdouble, np.clongdouble) else np.float64


def _k_along(axes: Sequence[AxisSpec], axis: int, ndim: int, dtype) -> np.ndarray:
    k = axes[axis].wavenumbers(dtype)
    shape = [1] * ndim
    shape[axis] = k.size
    return k.reshape(shape)


def spectral_partial(values: np.ndarray, axes: Sequence[AxisSpec],
                     orders: dict[int, int]) -> np.ndarray:
    """Mixed partial derivative ``prod_a d^{orders[a]}/dx_a^{orders[a]}`` of ``values``.

    ``axes`` describes every array axis of ``values``.  Real input gives real
    output.
    """
    orders = {a: o for a, o in orders.items() if o}
    if not orders:
        return values.copy()
    ndim = values.ndim
    rdt = _real_dtype(values)
    which = sorted(orders)
    spec = sfft.fftn(values, axes=which)
    mult = None
    for a in which:
        f = (1j * _k_along(axes, a, ndim, rdt)) ** orders[a]
        mult = f if mult is None else mult * f
    out = sfft.ifftn(spec * mult, axes=which)
    return out.real if not np.iscomplexobj(values) else out


def partial(values: np.ndarray, grid: ConfigurationGrid, orders: dict[int, int]) -> np.ndarray:
    """Mixed spectral partial derivative of a configuration-space array."""
    return spectral_partial(values, grid.axes, orders)


def gradient(values: np.ndarray, grid: ConfigurationGrid, target: ParticleIndex) -> np.ndarray:
    """Gradient with respect to the coordinates of ``target``.

    Returns an array of shape ``(spatial_dim, *grid.shape)``.
    """
    values = _check_field(values, grid.shape)
    return np.stack([partial(values, grid, {ax: 1}) for ax in grid.axes_of(target)])


def laplacian(values: np.ndarray, grid: ConfigurationGrid, target: ParticleIndex) -> np.ndarray:
    values = _check_field(values, grid.shape)
    axes = grid.axes_of(target)
    rdt = _real_dtype(values)
    spec = sfft.fftn(values, axes=axes)
    k2 = sum(_k_along(grid.axes, a, grid.ndim, rdt) ** 2 for a in axes)
    out = sfft.ifftn(-k2 * spec, axes=axes)
    return out if np.iscomplexobj(values) else out.real


def divergence(vector: np.ndarray, grid: ConfigurationGrid, target: ParticleIndex) -> np.ndarray:
    """Sum over ``target``'s axes of the matching component's partial derivative."""
    vector = np.asarray(vector)
    if vector.shape != (grid.spatial_dim, *grid.shape):
        raise GridError(
            f"vector field shape {vector.shape} does not match "
            f"({grid.spatial_dim}, *{grid.shape})"
        )
    _check_field(vector[0], grid.shape)
    if not np.all(np.isfinite(vector)):
        raise GridError("field contains non-finite values")
    return sum(partial(vector[c], grid, {ax: 1}) for c, ax in enumerate(grid.axes_of(target)))


# ---------------------------------------------------------------------------
# marginalization onto a single particle position


def reduce_to_position(values: np.ndarray, grid: ConfigurationGrid, keep: ParticleIndex) -> np.ndarray:
    """Integrate over every coordinate except those of ``keep``.

    Implements ``int dQ delta(q - q_keep) f(Q)`` with the midpoint rule.
    Leading axes beyond the grid dimensions (vector or tensor components) are
    carried along unchanged.
    """
    values = np.asarray(values)
    lead = values.ndim - grid.ndim
    if lead < 0 or values.shape[lead:] != grid.shape:
        raise GridError(f"field shape {values.shape} does not end with grid shape {grid.shape}")
    kept = grid.axes_of(keep)
    summed = tuple(lead + a for a in range(grid.ndim) if a not in kept)
    weight = float(np.prod([grid.axes[a].spacing for a in range(grid.ndim) if a not in kept]))
    if not summed:
        return values.copy()
    return values.sum(axis=summed) * weight


# ---------------------------------------------------------------------------
# calculus on the single-position grid


def position_partial(values: np.ndarray, grid: ConfigurationGrid, axis: int, order: int = 1) -> np.ndarray:
    return spectral_partial(values, grid.position_axes, {axis: order})


def position_gradient(values: np.ndarray, grid: ConfigurationGrid) -> np.ndarray:
    values = _check_field(values, grid.position_shape)
    return np.stack([position_partial(values, grid, a) for a in range(grid.spatial_dim)])


def position_divergence(values: np.ndarray, grid: ConfigurationGrid) -> np.ndarray:
    """Divergence of a position-space vector ``(nu, ...)`` or tensor ``(nu, nu, ...)``.

    For a tensor ``T`` the result is the vector with components
    ``sum_a d_a T[a, b]``.
    """
    values = np.asarray(values)
    nu = grid.spatial_dim
    if not np.all(np.isfinite(values)):
        raise GridError("field contains non-finite values")
    if values.shape == (nu, *grid.position_shape):
        return sum(position_partial(values[a], grid, a) for a in range(nu))
    if values.shape == (nu, nu, *grid.position_shape):
        return np.stack([
            sum(position_partial(values[a, b], grid, a) for a in range(nu)) for b in range(nu)
        ])
    raise GridError(f"position field shape {values.shape} is neither vector nor tensor on {grid.position_shape}")


def position_integral(values: np.ndarray, grid: ConfigurationGrid) -> np.ndarray:
    """Integral over the position grid of the trailing ``spatial_dim`` axes."""
    values = np.asarray(values)
    axes = tuple(range(values.ndim - grid.spatial_dim, values.ndim))
    return values.sum(axis=axes) * grid.position_cell_volume
