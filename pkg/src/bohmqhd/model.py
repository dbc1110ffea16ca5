"""Hamiltonian potentials and scenario descriptions.

Units are natural (hbar = 1, masses in units of the reference mass) unless a
scenario sets ``hbar`` explicitly; lengths, times and energies then follow the
scenario's own unit system.  A potential is a sum of parts:

* ``free``       : V = 0
* ``harmonic``   : V = sum_p m_p omega_p^2 |q_p - c|^2 / 2
* ``soft_coulomb``: V = sum_{p<p'} k c_p c_p' / sqrt(|q_p - q_p'|^2 + s^2)
* ``uniform_field``: V = sum_p c_p E(t) (e . q_p)   (dipole coupling, charge c_p)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .lattice import ConfigurationGrid, GridError, ParticleIndex, SortSpec

__all__ = [
    "SortSpec",
    "PotentialError",
    "Envelope",
    "Harmonic",
    "SoftCoulomb",
    "UniformField",
    "Potential",
    "evaluate_potential",
    "potential_gradient",
]


class PotentialError(ValueError):
    pass


def _per_sort(value, label: str, default: float) -> float:
    if value is None:
        return default
    if isinstance(value, Mapping):
        return float(value.get(label, default))
    return float(value)


@dataclass(frozen=True)
class Envelope:
    """Time profile E(t) of a uniform field.

    kind ``constant``: amplitude; ``cos``: amplitude*cos(omega t + phase);
    ``sin2``: amplitude*sin^2(pi t/duration)*cos(omega t + phase) on [0, duration], 0 outside.
    """

    kind: str = "constant"
    omega: float = 0.0
    phase: float = 0.0
    duration: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "cos", "sin2"):
            raise PotentialError(f"unknown envelope kind {self.kind!r}")
        if self.kind == "sin2" and not self.duration > 0:
            raise PotentialError("sin2 envelope needs a positive duration")

    def __call__(self, t: float) -> float:
        if self.kind == "constant":
            return 1.0
        carrier = math.cos(self.omega * t + self.phase)
        if self.kind == "cos":
            return carrier
        if t < 0 or t > self.duration:
            return 0.0
        return math.sin(math.pi * t / self.duration) ** 2 * carrier


@dataclass(frozen=True)
class Harmonic:
    """Isotropic trap; ``omega`` is a number or a ``{sort: omega}`` map."""

    omega: float | Mapping[str, float] = 1.0
    center: float | Sequence[float] = 0.0

    def _center(self, nu: int) -> np.ndarray:
        c = np.broadcast_to(np.asarray(self.center, dtype=float), (nu,))
        return c

    def omega_of(self, label: str) -> float:
        return _per_sort(self.omega, label, 0.0)

    def value(self, grid: ConfigurationGrid, t: float) -> np.ndarray:
        c = self._center(grid.spatial_dim)
        v = np.zeros(grid.shape)
        for p, axes in grid.iter_blocks():
            w = self.omega_of(p.sort)
            if w == 0.0:
                continue
            k = grid.mass(p) * w * w
            for a, ax in enumerate(axes):
                v = v + 0.5 * k * (grid.coordinate(ax) - c[a]) ** 2
        return v

    def gradient(self, grid: ConfigurationGrid, t: float, target: ParticleIndex) -> np.ndarray:
        c = self._center(grid.spatial_dim)
        w = self.omega_of(target.sort)
        k = grid.mass(target) * w * w
        return np.stack([
            np.broadcast_to(k * (grid.coordinate(ax) - c[a]), grid.shape)
            for a, ax in enumerate(grid.axes_of(target))
        ])


@dataclass(frozen=True)
class SoftCoulomb:
    """Pairwise soft-Coulomb interaction between all distinct particles."""

    strength: float = 1.0
    softening: float = 1.0
    charges: Mapping[str, float] | None = None

    def __post_init__(self):
        if not self.softening > 0:
            raise PotentialError("soft-Coulomb softening must be positive (bare Coulomb is singular)")

    def _charge(self, label: str) -> float:
        return _per_sort(self.charges, label, 1.0)

    def _r2(self, grid: ConfigurationGrid, p: ParticleIndex, q: ParticleIndex) -> np.ndarray:
        r2 = self.softening ** 2
        for ap, aq in zip(grid.axes_of(p), grid.axes_of(q)):
            r2 = r2 + (grid.coordinate(ap) - grid.coordinate(aq)) ** 2
        return r2

    def value(self, grid: ConfigurationGrid, t: float) -> np.ndarray:
        v = np.zeros(grid.shape)
        parts = grid.particles
        for i, p in enumerate(parts):
            for q in parts[i + 1:]:
                k = self.strength * self._charge(p.sort) * self._charge(q.sort)
                v = v + k / np.sqrt(self._r2(grid, p, q))
        return v

    def gradient(self, grid: ConfigurationGrid, t: float, target: ParticleIndex) -> np.ndarray:
        g = np.zeros((grid.spatial_dim, *grid.shape))
        for q in grid.particles:
            if q == target:
                continue
            k = self.strength * self._charge(target.sort) * self._charge(q.sort)
            inv3 = self._r2(grid, target, q) ** -1.5
            for a, (ap, aq) in enumerate(zip(grid.axes_of(target), grid.axes_of(q))):
                g[a] -= k * (grid.coordinate(ap) - grid.coordinate(aq)) * inv3
        return g


@dataclass(frozen=True)
class UniformField:
    """Dipole coupling ``c_p E(t) (e . q_p)`` to a spatially uniform field."""

    amplitude: float = 1.0
    direction: float | Sequence[float] = 1.0
    envelope: Envelope | None = None
    charges: Mapping[str, float] | None = None

    def field(self, t: float) -> float:
        env = 1.0 if self.envelope is None else self.envelope(t)
        return self.amplitude * env

    def _direction(self, nu: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.direction, dtype=float), (nu,))

    def value(self, grid: ConfigurationGrid, t: float) -> np.ndarray:
        e = self._direction(grid.spatial_dim)
        amp = self.field(t)
        v = np.zeros(grid.shape)
        if amp == 0.0:
            return v
        for p, axes in grid.iter_blocks():
            c = _per_sort(self.charges, p.sort, 1.0)
            for a, ax in enumerate(axes):
                if e[a] != 0.0 and c != 0.0:
                    v = v + c * amp * e[a] * grid.coordinate(ax)
        return v

    def gradient(self, grid: ConfigurationGrid, t: float, target: ParticleIndex) -> np.ndarray:
        e = self._direction(grid.spatial_dim)
        c = _per_sort(self.charges, target.sort, 1.0)
        amp = self.field(t)
        g = np.zeros((grid.spatial_dim, *grid.shape))
        for a in range(grid.spatial_dim):
            g[a] = c * amp * e[a]
        return g


@dataclass(frozen=True)
class Potential:
    """Sum of potential parts; an empty sum is the free particle."""

    parts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    def __add__(self, other: "Potential") -> "Potential":
        return Potential(self.parts + other.parts)

    @property
    def is_free(self) -> bool:
        return not self.parts

    @property
    def time_dependent(self) -> bool:
        return any(isinstance(p, UniformField) and p.envelope is not None
                   and p.envelope.kind != "constant" for p in self.parts)

    def harmonic_omega(self, label: str) -> float:
        """Combined trap frequency acting on ``label`` from all harmonic parts."""
        return math.sqrt(sum(p.omega_of(label) ** 2 for p in self.parts if isinstance(p, Harmonic)))


def evaluate_potential(potential: Potential, grid: ConfigurationGrid, t: float = 0.0) -> np.ndarray:
    """V(Q, t) sampled on the configuration grid."""
    v = np.zeros(grid.shape)
    for part in potential.parts:
        v = v + part.value(grid, t)
    if not np.all(np.isfinite(v)):
        raise PotentialError("potential is not finite on the grid")
    return v


def potential_gradient(potential: Potential, grid: ConfigurationGrid, t: float,
                       target: ParticleIndex) -> np.ndarray:
    """Analytic gradient of V with respect to ``target``'s coordinates, shape ``(nu, *grid.shape)``."""
    grid.axes_of(target)  # validates the index
    g = np.zeros((grid.spatial_dim, *grid.shape))
    for part in potential.parts:
        g = g + part.gradient(grid, t, target)
    return g


def harmonic(omega=1.0, center=0.0) -> Potential:
    return Potential((Harmonic(omega, center),))


def free() -> Potential:
    return Potential(())


__all__ += ["harmonic", "free", "GridError"]
