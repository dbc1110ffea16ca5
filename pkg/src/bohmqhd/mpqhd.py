"""Single-position hydrodynamic fields per particle sort and for the whole ensemble.

Every field of sort A is a marginal over all coordinates except those of
particle (A, 1), weighted by N(A) (and m_A where a mass density is meant).
Integrands are always evaluated in node-safe form:

* ``D w (x) w``  as ``J (x) J / D``            (masked where D is tiny)
* ``D d (x) d``  as ``(hbar/2m)^2 grad D (x) grad D / D``
* ``D grad V_qu`` from ``|Psi|^2`` times log-derivatives of Psi

Mean velocity and pressure tensor follow ``v = j / rho`` and
``p = Pi - rho v (x) v``; the latter is evaluated as ``Pi - j (x) j / rho``.

Vector fields have shape ``(nu, *q_shape)``, tensors ``(nu, nu, *q_shape)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lattice
from .bohm import NODE_EPS, LogDerivatives, current, density, node_mask
from .lattice import ConfigurationGrid, ParticleIndex
from .model import Potential, potential_gradient
from .snapshot import WavefunctionSnapshot

RHO_EPS = 1e-10


def _lead(label: str, grid: ConfigurationGrid) -> ParticleIndex:
    grid.sort(label)
    return ParticleIndex(label, 1)


def _reduce(values, grid, label):
    return lattice.reduce_to_position(values, grid, _lead(label, grid))


def density_mask(rho: np.ndarray, rho_eps: float = RHO_EPS) -> np.ndarray:
    return rho < rho_eps * rho.max()


def _divide(num: np.ndarray, den: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 0.0, num / np.where(mask, 1.0, den))


# ---------------------------------------------------------------------------
# per-sort fields


def mass_density(psi: WavefunctionSnapshot, label: str) -> np.ndarray:
    """rho_m^A(q) = N(A) m_A int dQ delta(q - q_1^A) D."""
    s = psi.grid.sort(label)
    return s.count * s.mass * _reduce(density(psi), psi.grid, label)


def mass_current(psi: WavefunctionSnapshot, label: str) -> np.ndarray:
    """j_m^A(q) = N(A) m_A int dQ delta(q - q_1^A) J_1^A."""
    s = psi.grid.sort(label)
    J = current(psi, _lead(label, psi.grid))
    return s.count * s.mass * _reduce(J, psi.grid, label)


def mean_velocity(rho: np.ndarray, j: np.ndarray, rho_eps: float = RHO_EPS) -> np.ndarray:
    """v = j / rho, zero where rho is below ``rho_eps * max(rho)``."""
    return _divide(j, rho, density_mask(rho, rho_eps))


def scalar_pressure(psi: WavefunctionSnapshot, label: str) -> np.ndarray:
    """P_A(q) = -N(A) hbar^2/(4 m_A) int dQ delta(q - q_1^A) lap_1^A D."""
    g = psi.grid
    s = g.sort(label)
    lapD = lattice.laplacian(density(psi), g, _lead(label, g))
    return -s.count * psi.hbar ** 2 / (4 * s.mass) * _reduce(lapD, g, label)


def _outer_over_D(vec: np.ndarray, D: np.ndarray, mask: np.ndarray) -> np.ndarray:
    nu = vec.shape[0]
    Ds = np.where(mask, 1.0, D)
    out = np.empty((nu, nu, *D.shape), dtype=np.result_type(vec, D))
    for a in range(nu):
        for b in range(a, nu):
            out[a, b] = np.where(mask, 0.0, vec[a] * vec[b] / Ds)
            out[b, a] = out[a, b]
    return out


def momentum_flow_classical(psi: WavefunctionSnapshot, label: str, node_eps: float = NODE_EPS) -> np.ndarray:
    """Pi^A,cl = N m int delta D (w_1 (x) w_1), from J (x) J / D."""
    g = psi.grid
    s = g.sort(label)
    D = density(psi)
    mask = node_mask(psi, node_eps)
    J = current(psi, _lead(label, g))
    return s.count * s.mass * _reduce(_outer_over_D(J, D, mask), g, label)


def osmotic_flux(psi: WavefunctionSnapshot, label: str) -> np.ndarray:
    """D d_1^A = -(hbar / 2m) grad_1 D, the node-safe osmotic integrand."""
    g = psi.grid
    m = g.sort(label).mass
    return -psi.hbar / (2 * m) * lattice.gradient(density(psi), g, _lead(label, g))


def momentum_flow_quantum(psi: WavefunctionSnapshot, label: str, node_eps: float = NODE_EPS,
                          pressure: np.ndarray | None = None) -> np.ndarray:
    """Pi^A,qu = 1 P_A + N m int delta D (d_1 (x) d_1)."""
    g = psi.grid
    s = g.sort(label)
    D = density(psi)
    mask = node_mask(psi, node_eps)
    Dd = osmotic_flux(psi, label)
    dd = s.count * s.mass * _reduce(_outer_over_D(Dd, D, mask), g, label)
    P = scalar_pressure(psi, label) if pressure is None else pressure
    for a in range(g.spatial_dim):
        dd[a, a] = dd[a, a] + P
    return dd


def momentum_flow_total_per_sort(pi_cl: np.ndarray, pi_qu: np.ndarray) -> np.ndarray:
    return pi_cl + pi_qu


def momentum_flow_direct(psi: WavefunctionSnapshot, label: str, node_eps: float = NODE_EPS) -> np.ndarray:
    """Pi^A from the combined integrand D (w (x) w + d (x) d) in one reduction."""
    g = psi.grid
    s = g.sort(label)
    D = density(psi)
    mask = node_mask(psi, node_eps)
    J = current(psi, _lead(label, g))
    Dd = osmotic_flux(psi, label)
    integrand = _outer_over_D(J, D, mask) + _outer_over_D(Dd, D, mask)
    out = s.count * s.mass * _reduce(integrand, g, label)
    P = scalar_pressure(psi, label)
    for a in range(g.spatial_dim):
        out[a, a] = out[a, a] + P
    return out


def force_density(psi: WavefunctionSnapshot, label: str, potential: Potential) -> np.ndarray:
    """f^A = N(A) int dQ delta(q - q_1^A) D (-grad_1^A V), with the analytic gradient."""
    g = psi.grid
    s = g.sort(label)
    gv = potential_gradient(potential, g, psi.t, _lead(label, g))
    return -s.count * _reduce(density(psi) * gv, g, label)


def quantum_force_density(psi: WavefunctionSnapshot, label: str, node_eps: float = NODE_EPS) -> np.ndarray:
    """f_qu^A = N(A) int dQ delta(q - q_1^A) D (-grad_1^A V_qu), integrated directly.

    Compare with :func:`quantum_force_from_tensor`, which takes the divergence
    route; the two agree up to discretization error.
    """
    g = psi.grid
    s = g.sort(label)
    ld = LogDerivatives(psi, node_eps)
    D = density(psi)
    comps = [np.where(ld.mask, 0.0, D * ld.grad_quantum_potential(b)) for b in g.axes_of(_lead(label, g))]
    return -s.count * _reduce(np.stack(comps), g, label)


def quantum_force_from_tensor(pi_qu: np.ndarray, grid: ConfigurationGrid) -> np.ndarray:
    """-div Pi^qu on the position grid."""
    return -lattice.position_divergence(pi_qu, grid)


def pressure_tensor(pi: np.ndarray, rho: np.ndarray, j: np.ndarray, rho_eps: float = RHO_EPS) -> np.ndarray:
    """p = Pi - rho v (x) v, evaluated as Pi - j (x) j / rho (zero correction below the density mask)."""
    return pi - _outer_over_D(j, rho, density_mask(rho, rho_eps))


# ---------------------------------------------------------------------------
# field sets


@dataclass
class MpqhdFieldSet:
    """Hydrodynamic fields of one sort (or of the total ensemble, ``label='tot'``)."""

    label: str
    rho: np.ndarray
    j: np.ndarray
    v: np.ndarray
    P: np.ndarray | None
    pi_cl: np.ndarray | None
    pi_qu: np.ndarray | None
    pi: np.ndarray
    f: np.ndarray
    f_qu: np.ndarray | None
    p: np.ndarray
    rho_mask: np.ndarray = field(repr=False, default=None)


def sort_fields(psi: WavefunctionSnapshot, label: str, potential: Potential, *,
                node_eps: float = NODE_EPS, rho_eps: float = RHO_EPS,
                quantum_force: bool = True) -> MpqhdFieldSet:
    """All fields of sort ``label``; ``quantum_force=False`` skips the (costly) direct f_qu."""
    rho = mass_density(psi, label)
    j = mass_current(psi, label)
    P = scalar_pressure(psi, label)
    pcl = momentum_flow_classical(psi, label, node_eps)
    pqu = momentum_flow_quantum(psi, label, node_eps, pressure=P)
    pi = momentum_flow_total_per_sort(pcl, pqu)
    return MpqhdFieldSet(
        label=label, rho=rho, j=j, v=mean_velocity(rho, j, rho_eps), P=P,
        pi_cl=pcl, pi_qu=pqu, pi=pi,
        f=force_density(psi, label, potential),
        f_qu=quantum_force_density(psi, label, node_eps) if quantum_force else None,
        p=pressure_tensor(pi, rho, j, rho_eps),
        rho_mask=density_mask(rho, rho_eps),
    )


def totals(per_sort: list[MpqhdFieldSet], rho_eps: float = RHO_EPS) -> MpqhdFieldSet:
    """Ensemble fields: sums of the per-sort fields; v and p from the summed rho, j, Pi."""
    if not per_sort:
        raise ValueError("totals need at least one sort")

    def add(name):
        vals = [getattr(s, name) for s in per_sort]
        if any(v is None for v in vals):
            return None
        out = vals[0].copy()
        for v in vals[1:]:
            out = out + v
        return out

    rho, j, pi = add("rho"), add("j"), add("pi")
    return MpqhdFieldSet(
        label="tot", rho=rho, j=j, v=mean_velocity(rho, j, rho_eps), P=add("P"),
        pi_cl=add("pi_cl"), pi_qu=add("pi_qu"), pi=pi, f=add("f"), f_qu=add("f_qu"),
        p=pressure_tensor(pi, rho, j, rho_eps), rho_mask=density_mask(rho, rho_eps),
    )


def all_fields(psi: WavefunctionSnapshot, potential: Potential, **kw) -> dict[str, MpqhdFieldSet]:
    """Per-sort field sets keyed by sort label plus the totals under ``'tot'``."""
    out = {s.label: sort_fields(psi, s.label, potential, **kw) for s in psi.grid.sorts}
    rho_eps = kw.get("rho_eps", RHO_EPS)
    out["tot"] = totals(list(out.values()), rho_eps)
    return out
