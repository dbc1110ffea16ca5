"""Reference wavefunctions with closed-form time dependence.

Orbitals evolve independently under a free or isotropic harmonic
single-particle Hamiltonian.  A many-particle state is the product over sorts
of (optionally symmetrized or antisymmetrized) products of orbitals.

Gaussian orbitals are written in the complex-width form

    psi(x, t) = z(t)^(-1/2) exp{ i/hbar [ A(t) (x - x_t)^2 + p_t (x - x_t)
                                         + (p_t x_t - p_0 x_0)/2 + G_0 ] }

with ``z'' = -omega^2 z`` and ``A = (m/2) z'/z``; this covers spreading free
packets, squeezed packets and coherent states in one formula.  The Bohmian
field oracles in :func:`exact_bohm_fields` instead use the real width law and
the linear velocity field ``w = x_t' + (x - x_t) sigma_t'/sigma_t``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .lattice import ConfigurationGrid, ParticleIndex
from .model import Potential, Harmonic
from .snapshot import BoundaryLeakError, WavefunctionSnapshot


class NoClosedForm(ValueError):
    """The requested state/potential combination has no closed-form evolution."""


def _vec(v, nu: int, dtype=float) -> np.ndarray:
    return np.broadcast_to(np.asarray(v, dtype=dtype), (nu,)).copy()


@dataclass(frozen=True)
class GaussianPacket:
    """Minimum-uncertainty packet: density width ``width``, mean wavenumber ``wavenumber``."""

    center: float | Sequence[float] = 0.0
    width: float = 1.0
    wavenumber: float | Sequence[float] = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("Gaussian width must be positive")


@dataclass(frozen=True)
class HarmonicEigenstate:
    """Oscillator eigenstate with quantum number ``n`` per direction."""

    n: int | Sequence[int] = 0

    def __post_init__(self):
        if min(np.atleast_1d(self.n)) < 0:
            raise ValueError("quantum numbers must be non-negative")


@dataclass(frozen=True)
class CoherentState:
    """Oscillator coherent state with complex amplitude ``alpha`` per direction."""

    alpha: complex | Sequence[complex] = 0.0


Orbital = GaussianPacket | HarmonicEigenstate | CoherentState

SYMMETRIES = ("none", "symmetric", "antisymmetric")


@dataclass(frozen=True)
class StateSpec:
    """Orbitals per sort (one per particle) and the exchange symmetry of each sort."""

    orbitals: Mapping[str, tuple]
    symmetry: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "orbitals", {k: tuple(v) for k, v in self.orbitals.items()})
        object.__setattr__(self, "symmetry", dict(self.symmetry))
        for label, sym in self.symmetry.items():
            if sym not in SYMMETRIES:
                raise ValueError(f"sort {label!r}: unknown symmetry {sym!r}")

    def symmetry_of(self, label: str) -> str:
        return self.symmetry.get(label, "none")

    def validate(self, grid: ConfigurationGrid) -> None:
        for s in grid.sorts:
            if s.label not in self.orbitals:
                raise ValueError(f"no orbitals given for sort {s.label!r}")
            if len(self.orbitals[s.label]) != s.count:
                raise ValueError(
                    f"sort {s.label!r} has {s.count} particles but {len(self.orbitals[s.label])} orbitals"
                )
        extra = set(self.orbitals) - {s.label for s in grid.sorts}
        if extra:
            raise ValueError(f"orbitals given for unknown sorts {sorted(extra)}")


# ---------------------------------------------------------------------------
# one-dimensional orbital factors


def _trap(potential: Potential | None, label: str, t: float) -> tuple[float, float]:
    """(omega, center) of the trap acting on sort ``label``; rejects non-quadratic potentials."""
    if potential is None:
        return 0.0, 0.0
    others = [p for p in potential.parts if not isinstance(p, Harmonic)]
    if others and t != 0.0:
        raise NoClosedForm("closed-form evolution needs a free or harmonic potential")
    centers = {tuple(np.atleast_1d(p.center)) for p in potential.parts if isinstance(p, Harmonic)}
    if len(centers) > 1:
        raise NoClosedForm("harmonic parts with different centers are not supported")
    c = np.atleast_1d(next(iter(centers)))[0] if centers else 0.0
    return potential.harmonic_omega(label), float(c)


def _heller_params(x0, k0, sigma, m, omega, hbar, t):
    """Return (x_t, p_t, A_t, log z_t) of a Gaussian starting unchirped."""
    p0 = hbar * k0
    a0 = 1j * hbar / (4.0 * sigma ** 2)
    if omega == 0.0:
        xt, pt = x0 + p0 * t / m, p0
        z = 1.0 + 2.0 * a0 * t / m
        dz = 2.0 * a0 / m
        logz = np.log(z)
    else:
        c, s = math.cos(omega * t), math.sin(omega * t)
        xt = x0 * c + p0 / (m * omega) * s
        pt = p0 * c - m * omega * x0 * s
        beta = 2.0 * a0 / (m * omega)  # purely imaginary
        z = c + beta * s
        dz = -omega * s + beta * omega * c
        # continuous branch: z e^{-i omega t} has positive real part for every t
        r = (c - 1j * s) * z
        logz = np.log(abs(z)) + 1j * (omega * t + math.atan2(r.imag, r.real))
    return xt, pt, 0.5 * m * dz / z, logz


def _gaussian_1d(x, x0, k0, sigma, m, omega, hbar, t, dtype):
    xt, pt, A, logz = _heller_params(x0, k0, sigma, m, omega, hbar, t)
    g0 = 1j * hbar / 4.0 * math.log(2.0 * math.pi * sigma ** 2)
    p0 = hbar * k0
    phase_const = 0.5 * (pt * xt - p0 * x0) + g0
    if dtype == np.clongdouble:
        x = x.astype(np.longdouble)
        A = np.clongdouble(A)
    u = x - xt
    expo = (1j / hbar) * (A * u * u + pt * u + phase_const) - 0.5 * logz
    return np.exp(expo)


def _hermite_functions(xi: np.ndarray, n: int) -> np.ndarray:
    """Normalized Hermite function h_n(xi) (unit L2 norm in xi) by stable recurrence."""
    h_prev = np.zeros_like(xi)
    h = np.exp(-xi * xi / 2) / np.sqrt(np.sqrt(np.asarray(np.pi, dtype=xi.dtype)))
    for k in range(n):
        h_prev, h = h, np.sqrt(np.asarray(2.0 / (k + 1), dtype=xi.dtype)) * xi * h - np.sqrt(
            np.asarray(k / (k + 1), dtype=xi.dtype)) * h_prev
    return h


def _eigen_1d(x, n, center, m, omega, hbar, t, dtype):
    if omega <= 0.0:
        raise NoClosedForm("oscillator eigenstates need a harmonic potential on the sort")
    rdt = np.longdouble if dtype == np.clongdouble else np.float64
    scale = np.sqrt(np.asarray(m * omega / hbar, dtype=rdt))
    xi = (x.astype(rdt) - center) * scale
    h = _hermite_functions(xi, n) * np.sqrt(scale)
    return h * np.exp(-1j * (n + 0.5) * omega * t)


def orbital_values(orb, coords: Sequence[np.ndarray], m: float, omega: float, center: float,
                   hbar: float, t: float, dtype=np.complex128) -> np.ndarray:
    """Orbital sampled on broadcastable per-direction coordinate arrays."""
    nu = len(coords)
    out = None
    for a, x in enumerate(coords):
        if isinstance(orb, GaussianPacket):
            f = _gaussian_1d(x - center, _vec(orb.center, nu)[a] - center, _vec(orb.wavenumber, nu)[a],
                             orb.width, m, omega, hbar, t, dtype)
        elif isinstance(orb, CoherentState):
            if omega <= 0.0:
                raise NoClosedForm("coherent states need a harmonic potential on the sort")
            alpha = _vec(orb.alpha, nu, complex)[a]
            sigma = math.sqrt(hbar / (2 * m * omega))
            x0 = math.sqrt(2 * hbar / (m * omega)) * alpha.real
            k0 = math.sqrt(2 * m * omega / hbar) * alpha.imag
            f = _gaussian_1d(x - center, x0, k0, sigma, m, omega, hbar, t, dtype)
        elif isinstance(orb, HarmonicEigenstate):
            f = _eigen_1d(x, int(_vec(orb.n, nu, int)[a]), center, m, omega, hbar, t, dtype)
        else:
            raise TypeError(f"unknown orbital {orb!r}")
        out = f if out is None else out * f
    return out.astype(dtype)


def _permutation_sign(perm: Sequence[int]) -> int:
    sign, seen = 1, list(perm)
    for i in range(len(seen)):
        while seen[i] != i:
            j = seen[i]
            seen[i], seen[j] = seen[j], seen[i]
            sign = -sign
    return sign


def sample_state(spec: StateSpec, grid: ConfigurationGrid, t: float = 0.0, *,
                 potential: Potential | None = None, hbar: float = 1.0,
                 dtype=np.complex128, leak_tol: float = 1e-12) -> WavefunctionSnapshot:
    """Psi(Q, t) of ``spec`` evolved in closed form, normalized on the grid.

    ``potential`` supplies the trap frequency per sort (free if omitted).
    Raises :class:`BoundaryLeakError` if ``|Psi|`` exceeds ``leak_tol`` on the
    box edge.
    """
    spec.validate(grid)
    rdt = np.longdouble if dtype == np.clongdouble else np.float64
    psi = None
    for s in grid.sorts:
        omega, center = _trap(potential, s.label, t)
        parts = grid.particles_of(s.label)
        orbs = spec.orbitals[s.label]
        # table[i][j]: orbital j sampled on the coordinates of particle i
        table = [[orbital_values(o, grid.particle_coordinates(p, rdt), s.mass, omega, center, hbar, t, dtype)
                  for o in orbs] for p in parts]
        sym = spec.symmetry_of(s.label)
        if sym == "none" or s.count == 1:
            block = _prod(table[i][i] for i in range(s.count))
        else:
            block = 0
            for perm in itertools.permutations(range(s.count)):
                sign = _permutation_sign(perm) if sym == "antisymmetric" else 1
                block = block + sign * _prod(table[i][perm[i]] for i in range(s.count))
        psi = block if psi is None else psi * block
    psi = np.broadcast_to(psi, grid.shape).astype(dtype)
    norm = np.sqrt(np.sum(np.abs(psi) ** 2) * np.asarray(grid.cell_volume, dtype=rdt))
    if not norm > 0:
        raise ValueError("state vanishes on the grid (e.g. antisymmetrized identical orbitals)")
    psi = psi / norm
    check_boundary(psi, leak_tol)
    return WavefunctionSnapshot(grid, t, psi, hbar)


def _prod(items):
    out = None
    for x in items:
        out = x if out is None else out * x
    return out


def boundary_amplitude(values: np.ndarray, width: int = 1) -> float:
    """Largest ``|values|`` within ``width`` points of any box face."""
    worst = 0.0
    for ax in range(values.ndim):
        lo = np.take(values, range(width), axis=ax)
        hi = np.take(values, range(values.shape[ax] - width, values.shape[ax]), axis=ax)
        worst = max(worst, float(np.abs(lo).max()), float(np.abs(hi).max()))
    return worst


def check_boundary(values: np.ndarray, tol: float) -> None:
    amp = boundary_amplitude(values)
    if amp > tol:
        raise BoundaryLeakError(f"|Psi| reaches {amp:.3e} on the box edge (limit {tol:.1e}); enlarge the box")


# ---------------------------------------------------------------------------
# closed-form Bohmian fields


@dataclass
class BohmFieldSet:
    """Configuration-space Bohmian fields of one snapshot.

    Vector fields are keyed by particle and have shape ``(nu, *grid.shape)``.
    Entries under ``node_mask`` are NaN in ``w``, ``d``, ``p`` and ``V_qu``.
    """

    D: np.ndarray
    w: dict[ParticleIndex, np.ndarray]
    J: dict[ParticleIndex, np.ndarray]
    d: dict[ParticleIndex, np.ndarray]
    V_qu: np.ndarray
    p: dict[ParticleIndex, np.ndarray]
    node_mask: np.ndarray


def gaussian_width(sigma0: float, m: float, omega: float, hbar: float, t: float) -> tuple[float, float]:
    """Density width sigma_t and its rate sigma_t' for an unchirped start."""
    if omega == 0.0:
        tau = 2 * m * sigma0 ** 2 / hbar
        s = sigma0 * math.sqrt(1 + (t / tau) ** 2)
        ds = sigma0 * (t / tau ** 2) / math.sqrt(1 + (t / tau) ** 2)
    else:
        g2 = hbar / (2 * m * omega)  # ground-state variance
        c, sn = math.cos(omega * t), math.sin(omega * t)
        s2 = sigma0 ** 2 * c * c + (g2 ** 2 / sigma0 ** 2) * sn * sn
        s = math.sqrt(s2)
        ds = omega * sn * c * (g2 ** 2 / sigma0 ** 2 - sigma0 ** 2) / s
    return s, ds


def classical_path(x0: float, v0: float, omega: float, t: float) -> tuple[float, float]:
    """Position and velocity of a classical particle (free or harmonic about 0)."""
    if omega == 0.0:
        return x0 + v0 * t, v0
    c, s = math.cos(omega * t), math.sin(omega * t)
    return x0 * c + v0 / omega * s, v0 * c - x0 * omega * s


def _gaussian_params(orb, m, omega, hbar, nu):
    if isinstance(orb, GaussianPacket):
        return _vec(orb.center, nu), hbar * _vec(orb.wavenumber, nu) / m, orb.width
    if isinstance(orb, CoherentState):
        alpha = _vec(orb.alpha, nu, complex)
        x0 = math.sqrt(2 * hbar / (m * omega)) * alpha.real
        v0 = math.sqrt(2 * hbar * omega / m) * alpha.imag
        return x0, v0, math.sqrt(hbar / (2 * m * omega))
    if isinstance(orb, HarmonicEigenstate) and not np.any(np.atleast_1d(orb.n)):
        return np.zeros(nu), np.zeros(nu), math.sqrt(hbar / (2 * m * omega))
    raise NoClosedForm(f"no closed-form Bohmian fields for {orb!r}")


def exact_bohm_fields(spec: StateSpec, grid: ConfigurationGrid, t: float = 0.0, *,
                      potential: Potential | None = None, hbar: float = 1.0,
                      node_eps: float = 1e-10) -> BohmFieldSet:
    """Closed-form D, w, J, d, V_qu and p for unsymmetrized Gaussian-family states."""
    spec.validate(grid)
    nu = grid.spatial_dim
    D = np.ones(grid.shape)
    w, d = {}, {}
    V_qu = np.zeros(grid.shape)
    for s in grid.sorts:
        if s.count > 1 and spec.symmetry_of(s.label) != "none":
            raise NoClosedForm("symmetrized states have no closed-form Bohmian fields here")
        omega, center = _trap(potential, s.label, t)
        m = s.mass
        for p, orb in zip(grid.particles_of(s.label), spec.orbitals[s.label]):
            x0, v0, sigma0 = _gaussian_params(orb, m, omega, hbar, nu)
            sig, dsig = gaussian_width(sigma0, m, omega, hbar, t)
            wv, dv = [], []
            for a, x in enumerate(grid.particle_coordinates(p)):
                xc, vc = classical_path(x0[a] - center, v0[a], omega, t)
                u = x - center - xc
                D = D * np.exp(-u * u / (2 * sig * sig)) / math.sqrt(2 * math.pi * sig * sig)
                wv.append(np.broadcast_to(vc + u * dsig / sig, grid.shape))
                dv.append(np.broadcast_to(hbar / (2 * m) * u / sig ** 2, grid.shape))
                V_qu = V_qu + hbar ** 2 / (4 * m * sig ** 2) - hbar ** 2 * u * u / (8 * m * sig ** 4)
            w[p] = np.stack(wv)
            d[p] = np.stack(dv)
    D = np.broadcast_to(D, grid.shape).copy()
    V_qu = np.broadcast_to(V_qu, grid.shape).copy()
    mask = D < node_eps * D.max()
    J = {p: D * v for p, v in w.items()}
    pm = {p: grid.mass(p) * v for p, v in w.items()}
    return BohmFieldSet(D=D, w=w, J=J, d=d, V_qu=V_qu, p=pm, node_mask=mask)
