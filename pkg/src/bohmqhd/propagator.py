"""Strang split-operator propagation of the many-particle Schroedinger equation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .lattice import ConfigurationGrid
from .model import Potential, evaluate_potential
from .snapshot import BoundaryLeakError, SnapshotSeries, WavefunctionSnapshot

log = logging.getLogger(__name__)


def edge_probability(values: np.ndarray, grid: ConfigurationGrid, width: int = 2) -> float:
    """Probability carried by points within ``width`` grid points of any box face."""
    dens = np.abs(values) ** 2
    edge = np.zeros(grid.shape, dtype=bool)
    for ax in range(grid.ndim):
        idx = [slice(None)] * grid.ndim
        idx[ax] = np.r_[0:width, grid.shape[ax] - width:grid.shape[ax]]
        edge[tuple(idx)] = True
    return float(dens[edge].sum() * grid.cell_volume)


@dataclass
class Propagator:
    """Reusable split-operator stepper for one grid, potential and hbar.

    ``leak_tol`` bounds the probability allowed within two points of the box
    edge after every step.
    """

    grid: ConfigurationGrid
    potential: Potential
    hbar: float = 1.0
    leak_tol: float = 1e-8

    def __post_init__(self):
        g = self.grid
        kin = np.zeros(g.shape)
        for p, axes in g.iter_blocks():
            m = g.mass(p)
            for ax in axes:
                k = g.axes[ax].full_wavenumbers()
                shape = [1] * g.ndim
                shape[ax] = k.size
                kin = kin + (self.hbar * k.reshape(shape)) ** 2 / (2 * m)
        self._kinetic = kin
        self._kin_dt = None
        self._static_v = None if self.potential.time_dependent else evaluate_potential(self.potential, g, 0.0)

    def _potential_at(self, t: float) -> np.ndarray:
        if self._static_v is not None:
            return self._static_v
        return evaluate_potential(self.potential, self.grid, t)

    def _kinetic_phase(self, dt: float) -> np.ndarray:
        if self._kin_dt is None or self._kin_dt[0] != dt:
            self._kin_dt = (dt, np.exp(-1j * self._kinetic * dt / self.hbar))
        return self._kin_dt[1]

    def step(self, psi: WavefunctionSnapshot, dt: float) -> WavefunctionSnapshot:
        if not dt > 0:
            raise ValueError("time step must be positive")
        half_v = np.exp(-0.5j * self._potential_at(psi.t + 0.5 * dt) * dt / self.hbar)
        v = half_v * psi.values
        v = sfft.ifftn(self._kinetic_phase(dt) * sfft.fftn(v))
        v = half_v * v
        leak = edge_probability(v, self.grid)
        if leak > self.leak_tol:
            raise BoundaryLeakError(
                f"probability {leak:.3e} within 2 points of the box edge at t={psi.t + dt:.6g} "
                f"exceeds {self.leak_tol:.1e}; enlarge the box or shorten the run"
            )
        return WavefunctionSnapshot(psi.grid, psi.t + dt, v, psi.hbar)


def step(psi: WavefunctionSnapshot, potential: Potential, dt: float, *, leak_tol: float = 1e-8) -> WavefunctionSnapshot:
    """One Strang step exp(-iV dt/2h) exp(-iT dt/h) exp(-iV dt/2h), V at the step midpoint."""
    return Propagator(psi.grid, potential, psi.hbar, leak_tol).step(psi, dt)


def evolve(psi0: WavefunctionSnapshot, potential: Potential, dt: float, n_steps: int, *,
           every: int = 1, leak_tol: float = 1e-8) -> SnapshotSeries:
    """Propagate ``n_steps`` steps of size ``dt`` keeping every ``every``-th snapshot (and the first)."""
    if n_steps < 0 or every < 1:
        raise ValueError("n_steps must be >= 0 and every >= 1")
    prop = Propagator(psi0.grid, potential, psi0.hbar, leak_tol)
    out = [psi0]
    psi = psi0
    for k in range(1, n_steps + 1):
        psi = prop.step(psi, dt)
        if k % every == 0:
            # time stamp from the step count avoids accumulated rounding in t
            out.append(psi.replace(psi.values, t=psi0.t + k * dt))
            psi = out[-1]
    log.debug("evolved %d steps, kept %d snapshots", n_steps, len(out))
    return SnapshotSeries(out)
