"""Bohmian trajectories integrated through a stored snapshot series.

Velocities are taken from each snapshot (node-safe log-derivative form),
interpolated multilinearly in space on the periodic grid and linearly in
time between snapshots, and integrated with classical RK4.  Because the
velocity is the phase gradient by construction, the initial momentum of every
trajectory is the phase gradient at its seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.stats import chisquare

from .bohm import NODE_EPS, velocity
from .snapshot import SnapshotSeries, WavefunctionSnapshot

OK, LEFT_BOX, NODE = 0, 1, 2
STATUS_NAMES = {OK: "ok", LEFT_BOX: "left-box", NODE: "node"}


@dataclass
class TrajectoryBundle:
    """Sample paths ``paths[k, s, :]`` of trajectory ``k`` at stored time ``times[s]``.

    Columns of the last axis follow Q-order.  Aborted trajectories keep their
    last valid point and are NaN afterwards; ``status`` says why.
    """

    times: np.ndarray
    paths: np.ndarray
    weights: np.ndarray
    status: np.ndarray
    stopped: np.ndarray  # first stored-time index that is NaN (len(times) if never)

    def __len__(self) -> int:
        return self.paths.shape[0]

    @property
    def active(self) -> np.ndarray:
        return self.status == OK

    def at(self, s: int) -> np.ndarray:
        return self.paths[:, s, :]

    def to_csv(self, path: str | Path, axis_names: list[str] | None = None) -> None:
        """Columns ``t, trajectory, <one per axis in Q-order>``; one row per (trajectory, time)."""
        K, S, n_ax = self.paths.shape
        names = axis_names or [f"q{a}" for a in range(n_ax)]
        keep = np.arange(S)[None, :] < self.stopped[:, None]
        kk, ss = np.nonzero(keep)
        table = np.column_stack([self.times[ss], kk, self.paths[kk, ss]])
        fmt = ["%.17g", "%d"] + ["%.17g"] * n_ax
        np.savetxt(path, table, fmt=fmt, delimiter=",", header=",".join(["t", "trajectory", *names]), comments="")


def sample_seeds(psi: WavefunctionSnapshot, count: int, rng: np.random.Generator, *, jitter: bool = True) -> np.ndarray:
    """Draw ``count`` configurations distributed as D.

    A grid cell is chosen with probability ``D * dV`` (inverse CDF over the
    flattened grid); with ``jitter`` the point is then spread uniformly over
    that cell.  Returns shape ``(count, d_tot)``.
    """
    g = psi.grid
    D = (np.abs(psi.values) ** 2).astype(np.float64).ravel()
    idx = rng.choice(D.size, size=count, p=D / D.sum())
    multi = np.unravel_index(idx, g.shape)
    pts = np.empty((count, g.ndim))
    for a, ax in enumerate(g.axes):
        pts[:, a] = ax.lo + multi[a] * ax.spacing
        if jitter:
            pts[:, a] += (rng.random(count) - 0.5) * ax.spacing
    return pts


def velocity_field(psi: WavefunctionSnapshot, node_eps: float = NODE_EPS) -> np.ndarray:
    """All velocity components stacked in Q-order, shape ``(d_tot, *grid.shape)``; NaN at nodes."""
    return np.concatenate([velocity(psi, p, node_eps) for p in psi.grid.particles]).astype(np.float64)


class _Interp:
    def __init__(self, grid):
        self.lo = np.array([a.lo for a in grid.axes])
        self.hi = np.array([a.hi for a in grid.axes])
        self.dx = np.array([a.spacing for a in grid.axes])

    def outside(self, pts: np.ndarray) -> np.ndarray:
        return np.any((pts < self.lo) | (pts >= self.hi), axis=1)

    def __call__(self, field: np.ndarray, pts: np.ndarray) -> np.ndarray:
        coords = ((pts - self.lo) / self.dx).T
        return np.stack([map_coordinates(comp, coords, order=1, mode="grid-wrap") for comp in field], axis=1)


def integrate_trajectories(series: SnapshotSeries, seeds: np.ndarray, *, substeps: int = 1,
                           node_eps: float = NODE_EPS, weights: np.ndarray | None = None) -> TrajectoryBundle:
    """RK4 from ``series[0].t`` through every stored time.

    A trajectory that leaves the box or lands where the velocity is undefined
    (node mask) is stopped and flagged.
    """
    g = series.grid
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.shape[1] != g.ndim:
        raise ValueError(f"seeds need {g.ndim} coordinates, got {seeds.shape[1]}")
    K, S = seeds.shape[0], len(series)
    interp = _Interp(g)
    times = series.times
    paths = np.full((K, S, g.ndim), np.nan)
    status = np.zeros(K, dtype=int)
    stopped = np.full(K, S)
    x = seeds.copy()
    paths[:, 0] = x
    fields = [velocity_field(series[0], node_eps)]
    alive = np.ones(K, dtype=bool)

    def vel(f0, f1, lam, pts):
        v0 = interp(f0, pts)
        return v0 if lam == 0 else (1 - lam) * v0 + lam * interp(f1, pts)

    for s in range(1, S):
        fields.append(velocity_field(series[s], node_eps))
        f0, f1 = fields[-2], fields[-1]
        fields.pop(0)
        h = (times[s] - times[s - 1]) / substeps
        # stage points outside the box would see wrapped velocities; such trajectories have left
        escaped = np.zeros(K, dtype=bool)
        for sub in range(substeps):
            a = sub / substeps
            b = (sub + 0.5) / substeps
            c = (sub + 1) / substeps
            xa = x[alive]
            k1 = vel(f0, f1, a, xa)
            x2 = xa + 0.5 * h * k1
            k2 = vel(f0, f1, b, x2)
            x3 = xa + 0.5 * h * k2
            k3 = vel(f0, f1, b, x3)
            x4 = xa + h * k3
            k4 = vel(f0, f1, c, x4)
            x[alive] = xa + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            escaped[alive] |= np.any([interp.outside(y) for y in (x2, x3, x4)], axis=0)
        out = alive & (escaped | interp.outside(x))
        bad_node = alive & ~out & ~np.all(np.isfinite(x), axis=1)
        status[bad_node] = NODE
        status[out] = LEFT_BOX
        newly = bad_node | out
        stopped[newly] = s
        alive &= ~newly
        paths[alive, s] = x[alive]
    w = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, dtype=float)
    return TrajectoryBundle(times, paths, w, status, stopped)


def ordering_preserved(bundle: TrajectoryBundle) -> bool:
    """1D single-particle check: the order of positions never changes (surviving trajectories)."""
    if bundle.paths.shape[2] != 1:
        raise ValueError("ordering check applies to one-coordinate systems")
    keep = bundle.active
    p = bundle.paths[keep, :, 0]
    order = np.argsort(p[:, 0], kind="stable")
    return bool(np.all(np.diff(p[order], axis=0) >= 0))


def density_chi_square(bundle: TrajectoryBundle, psi: WavefunctionSnapshot, s: int | None = None,
                       min_expected: float = 5.0):
    """Pearson chi-square of trajectory positions against D at stored time ``s``.

    Bins are the grid cells (centred on grid points); neighbouring cells are
    merged along the flattened grid until each bin expects ``min_expected``
    counts.  Returns ``(statistic, p_value, n_bins)``.
    """
    g = psi.grid
    s = len(bundle.times) - 1 if s is None else s
    pts = bundle.at(s)[bundle.active]
    idx = []
    for a, ax in enumerate(g.axes):
        k = np.floor((pts[:, a] - ax.lo) / ax.spacing + 0.5).astype(int) % ax.n
        idx.append(k)
    flat = np.ravel_multi_index(tuple(idx), g.shape)
    observed = np.bincount(flat, minlength=int(np.prod(g.shape))).astype(float)
    D = (np.abs(psi.values) ** 2).astype(np.float64).ravel()
    expected = D / D.sum() * len(pts)
    obs_b, exp_b = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_b.append(acc_o)
            exp_b.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if obs_b:
            obs_b[-1] += acc_o
            exp_b[-1] += acc_e
        else:
            obs_b.append(acc_o)
            exp_b.append(acc_e)
    obs_b, exp_b = np.array(obs_b), np.array(exp_b)
    exp_b *= obs_b.sum() / exp_b.sum()
    stat, p = chisquare(obs_b, exp_b)
    return float(stat), float(p), len(obs_b)
