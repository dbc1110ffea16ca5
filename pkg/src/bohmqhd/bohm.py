"""Bohmian fields on configuration space and their equations of motion.

Everything is derived from Psi and its spectral derivatives.  The phase S is
never unwrapped: velocities come from ``Im(grad Psi / Psi)``, currents from
``Im(Psi* grad Psi)``, and the quantum potential either from derivatives of
D (density form) or from ``Re(lap Psi / Psi) + Im(grad Psi / Psi)^2``, which
equals ``lap a / a`` for ``a = |Psi|`` (amplitude form).

Points where ``D < node_eps * max(D)`` form the node mask; quantities that
divide by Psi or D are NaN there and masked points never enter a norm.
"""

from __future__ import annotations

import logging

import numpy as np

from . import lattice
from .lattice import ConfigurationGrid, ParticleIndex
from .model import Potential, evaluate_potential, potential_gradient
from .residuals import Residual, make_residual
from .snapshot import SnapshotSeries, WavefunctionSnapshot
from .states import BohmFieldSet

log = logging.getLogger(__name__)

NODE_EPS = 1e-10
MASK_WARN_FRACTION = 0.2


def node_mask(psi: WavefunctionSnapshot, node_eps: float = NODE_EPS) -> np.ndarray:
    D = np.abs(psi.values) ** 2
    return D < node_eps * D.max()


def _masked(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=np.result_type(values, np.float64), copy=True)
    out[..., mask] = np.nan
    return out


def _safe_psi(psi: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 1.0, psi)


def _warn_mask(mask: np.ndarray, what: str) -> None:
    frac = np.count_nonzero(mask) / mask.size
    if frac > MASK_WARN_FRACTION:
        log.info("%s: %.1f%% of grid points are masked as nodes", what, 100 * frac)


def density(psi: WavefunctionSnapshot) -> np.ndarray:
    """D = |Psi|^2."""
    return np.abs(psi.values) ** 2


def _grad_psi(psi: WavefunctionSnapshot, target: ParticleIndex) -> np.ndarray:
    g = psi.grid
    return np.stack([lattice.partial(psi.values, g, {ax: 1}) for ax in g.axes_of(target)])


def current(psi: WavefunctionSnapshot, target: ParticleIndex) -> np.ndarray:
    """J = (hbar/m) Im(Psi* grad Psi); finite at nodes."""
    m = psi.grid.mass(target)
    return psi.hbar / m * np.imag(np.conj(psi.values) * _grad_psi(psi, target))


def velocity(psi: WavefunctionSnapshot, target: ParticleIndex, node_eps: float = NODE_EPS) -> np.ndarray:
    """Bohmian velocity w = (hbar/m) Im(grad Psi / Psi), NaN on the node mask."""
    mask = node_mask(psi, node_eps)
    _warn_mask(mask, "velocity")
    m = psi.grid.mass(target)
    w = psi.hbar / m * np.imag(_grad_psi(psi, target) / _safe_psi(psi.values, mask))
    return _masked(w, mask)


def momentum(psi: WavefunctionSnapshot, target: ParticleIndex, node_eps: float = NODE_EPS) -> np.ndarray:
    return psi.grid.mass(target) * velocity(psi, target, node_eps)


def osmotic_velocity(psi: WavefunctionSnapshot, target: ParticleIndex, node_eps: float = NODE_EPS) -> np.ndarray:
    """d = -(hbar/2m) grad D / D, evaluated as -(hbar/m) Re(Psi* grad Psi)/D."""
    mask = node_mask(psi, node_eps)
    m = psi.grid.mass(target)
    D = np.where(mask, 1.0, np.abs(psi.values) ** 2)
    d = -psi.hbar / m * np.real(np.conj(psi.values) * _grad_psi(psi, target)) / D
    return _masked(d, mask)


def quantum_potential(D: np.ndarray, grid: ConfigurationGrid, hbar: float = 1.0,
                      node_eps: float = NODE_EPS) -> np.ndarray:
    """Density form: -sum hbar^2/(4m) [lap D / D - (grad D)^2 / (2 D^2)] over all particles."""
    D = np.asarray(D)
    mask = D < node_eps * D.max()
    Ds = np.where(mask, 1.0, D)
    vq = np.zeros(grid.shape, dtype=D.dtype)
    for p, axes in grid.iter_blocks():
        m = grid.mass(p)
        acc = 0
        for ax in axes:
            d1 = lattice.partial(D, grid, {ax: 1})
            d2 = lattice.partial(D, grid, {ax: 2})
            acc = acc + d2 / Ds - d1 * d1 / (2 * Ds * Ds)
        vq = vq - hbar ** 2 / (4 * m) * acc
    return _masked(vq, mask)


class LogDerivatives:
    """Spectral derivatives of Psi divided by Psi, cached per snapshot.

    ``u(a) = d_a Psi / Psi``, ``second(a, b) = d_a d_b Psi / Psi`` and
    ``third(a, a, b) = d_b d_a^2 Psi / Psi`` with masked points of Psi replaced
    by 1 before dividing.
    """

    def __init__(self, psi: WavefunctionSnapshot, node_eps: float = NODE_EPS):
        self.psi = psi
        self.grid = psi.grid
        self.mask = node_mask(psi, node_eps)
        self._den = _safe_psi(psi.values, self.mask)
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    def ratio(self, *axes: int) -> np.ndarray:
        key = tuple(sorted(axes))
        if key not in self._cache:
            orders: dict[int, int] = {}
            for a in key:
                orders[a] = orders.get(a, 0) + 1
            self._cache[key] = lattice.partial(self.psi.values, self.grid, orders) / self._den
        return self._cache[key]

    def laplacian_a_over_a(self, axes) -> np.ndarray:
        """(lap a)/a over ``axes`` for a = |Psi|."""
        return sum(np.real(self.ratio(a, a)) + np.imag(self.ratio(a)) ** 2 for a in axes)

    def d_laplacian_a_over_a(self, axes, b: int) -> np.ndarray:
        """d_b [(lap a)/a] over ``axes``."""
        out = 0
        ub = self.ratio(b)
        for a in axes:
            ua = self.ratio(a)
            out = out + np.real(self.ratio(a, a, b) - self.ratio(a, a) * ub) \
                + 2 * np.imag(ua) * np.imag(self.ratio(a, b) - ua * ub)
        return out

    def quantum_potential(self) -> np.ndarray:
        h = self.psi.hbar
        return sum(-h ** 2 / (2 * self.grid.mass(p)) * self.laplacian_a_over_a(axes)
                   for p, axes in self.grid.iter_blocks())

    def grad_quantum_potential(self, b: int) -> np.ndarray:
        h = self.psi.hbar
        return sum(-h ** 2 / (2 * self.grid.mass(p)) * self.d_laplacian_a_over_a(axes, b)
                   for p, axes in self.grid.iter_blocks())

    def velocity_axis(self, a: int, m: float) -> np.ndarray:
        return self.psi.hbar / m * np.imag(self.ratio(a))

    def grad_momentum(self, a: int, b: int) -> np.ndarray:
        """d_a p_b with p_b = hbar Im(d_b Psi / Psi)."""
        return self.psi.hbar * np.imag(self.ratio(a, b) - self.ratio(a) * self.ratio(b))


def quantum_potential_amplitude_form(psi: WavefunctionSnapshot, node_eps: float = NODE_EPS) -> np.ndarray:
    """Amplitude form: -sum hbar^2/(2m) lap a / a with a = |Psi|."""
    ld = LogDerivatives(psi, node_eps)
    return _masked(ld.quantum_potential(), ld.mask)


def bohm_fields(psi: WavefunctionSnapshot, node_eps: float = NODE_EPS) -> BohmFieldSet:
    """All Bohmian fields of one snapshot."""
    g = psi.grid
    mask = node_mask(psi, node_eps)
    w, J, d, p = {}, {}, {}, {}
    for part in g.particles:
        w[part] = velocity(psi, part, node_eps)
        J[part] = current(psi, part)
        d[part] = osmotic_velocity(psi, part, node_eps)
        p[part] = g.mass(part) * w[part]
    vq = quantum_potential_amplitude_form(psi, node_eps)
    return BohmFieldSet(D=density(psi), w=w, J=J, d=d, V_qu=vq, p=p, node_mask=mask)


def mask_fraction(mask: np.ndarray) -> float:
    return float(np.count_nonzero(mask) / mask.size)


# ---------------------------------------------------------------------------
# equations of motion


def time_derivative(series: SnapshotSeries, index: int, fn) -> np.ndarray:
    """Central difference of ``fn(snapshot)`` at ``series[index]``."""
    i = series.check_centered(index)
    return (fn(series[i + 1]) - fn(series[i - 1])) / (2 * series.dt)


def bm_continuity_residual(series: SnapshotSeries, index: int) -> Residual:
    """r = dD/dt + sum_(A,i) div_i J_i at ``series[index]``.

    Relative to ``max(|dD/dt|, |div J|)``; no node mask is needed because J
    is evaluated in its node-safe form.
    """
    i = series.check_centered(index)
    psi = series[i]
    g = psi.grid
    dDdt = time_derivative(series, i, density)
    divJ = sum(lattice.divergence(current(psi, p), g, p) for p in g.particles)
    return make_residual(dDdt + divJ, {"dD/dt": dDdt, "div J": divJ}, g.cell_volume)


def eulerian_motion_residual(series: SnapshotSeries, index: int, target: ParticleIndex,
                             potential: Potential, node_eps: float = NODE_EPS) -> Residual:
    """Residual of [d/dt + sum_(B,i) w_i . grad_i] p_target = -grad_target (V_qu + V).

    Returns a vector field of shape ``(nu, *grid.shape)`` masked (NaN) where
    any of the three snapshots used has a node.  The denominator is the
    largest of the four term norms, so a stationary state is measured against
    ``grad V`` rather than against its vanishing momentum terms.
    """
    i = series.check_centered(index)
    psi = series[i]
    g = psi.grid
    mt = g.mass(target)
    prev, cur, nxt = (LogDerivatives(series[k], node_eps) for k in (i - 1, i, i + 1))
    mask = prev.mask | cur.mask | nxt.mask
    taxes = g.axes_of(target)
    dpdt, conv, fqu, fcl = [], [], [], []
    gradV = potential_gradient(potential, g, psi.t, target)
    for c, b in enumerate(taxes):
        pn = mt * nxt.velocity_axis(b, mt)
        pp = mt * prev.velocity_axis(b, mt)
        dpdt.append((pn - pp) / (2 * series.dt))
        cv = 0
        for p, axes in g.iter_blocks():
            m = g.mass(p)
            for a in axes:
                cv = cv + cur.velocity_axis(a, m) * cur.grad_momentum(a, b)
        conv.append(cv)
        fqu.append(cur.grad_quantum_potential(b))
        fcl.append(gradV[c])
    dpdt, conv, fqu, fcl = (np.stack(x).astype(np.float64) for x in (dpdt, conv, fqu, fcl))
    res = dpdt + conv + fqu + fcl
    out = make_residual(res, {"dp/dt": dpdt, "convective": conv, "grad V_qu": fqu, "grad V": fcl},
                        g.cell_volume, mask=mask, lead=1)
    out.field = _masked(res, mask)
    _warn_mask(mask, "eulerian residual")
    return out


def schroedinger_residual(series: SnapshotSeries, index: int, potential: Potential) -> float:
    """||i hbar dPsi/dt - H Psi|| / ||Psi|| with a central time difference."""
    i = series.check_centered(index)
    psi = series[i]
    g = psi.grid
    dpsi = time_derivative(series, i, lambda s: s.values)
    h = psi.values * evaluate_potential(potential, g, psi.t)
    for p in g.particles:
        h = h - psi.hbar ** 2 / (2 * g.mass(p)) * lattice.laplacian(psi.values, g, p)
    r = 1j * psi.hbar * dpsi - h
    return float(np.sqrt(np.sum(np.abs(r) ** 2) / np.sum(np.abs(psi.values) ** 2)))
