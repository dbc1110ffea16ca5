"""Residuals of the single-position balance equations, identity checks,
convergence studies and the residual report.

Time derivatives are central differences on the snapshot cadence.  The
convective side of the Cauchy equation is discretized from the conserved
quantities,

    rho D_t v    := d_t j - v d_t rho
    rho (v.grad) v := div(j (x) j / rho) - v div j

which are the product-rule expansions of ``rho (d_t + v.grad) v`` for
``v = j / rho``.  With ``p = Pi - j (x) j / rho`` this makes the Cauchy
residual equal ``R_ehrenfest - v R_continuity`` up to roundoff, and the
equivalence residual checks exactly that.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import bohm, lattice
from . import mpqhd as mq
from .bohm import NODE_EPS
from .lattice import ConfigurationGrid
from .model import Potential
from .mpqhd import RHO_EPS, MpqhdFieldSet
from .residuals import Residual, l2, make_residual
from .snapshot import SnapshotSeries, WavefunctionSnapshot

log = logging.getLogger(__name__)

TOTAL = "tot"
COVERAGE_WARN = 50.0


class _FieldCache:
    """Per-snapshot MPQHD field sets, computed lazily and shared between equations."""

    def __init__(self, series: SnapshotSeries, potential: Potential, node_eps: float, rho_eps: float):
        self.series = series
        self.potential = potential
        self.node_eps = node_eps
        self.rho_eps = rho_eps
        self._sets: dict[int, dict[str, MpqhdFieldSet]] = {}

    def __call__(self, k: int, label: str) -> MpqhdFieldSet:
        if k not in self._sets:
            psi = self.series[k]
            per = {s.label: mq.sort_fields(psi, s.label, self.potential, node_eps=self.node_eps,
                                           rho_eps=self.rho_eps, quantum_force=False)
                   for s in psi.grid.sorts}
            per[TOTAL] = mq.totals(list(per.values()), self.rho_eps)
            self._sets[k] = per
        return self._sets[k][label]


def _cache(series, potential, node_eps, rho_eps, cache):
    if cache is not None:
        return cache
    return _FieldCache(series, potential if potential is not None else Potential(), node_eps, rho_eps)


def _central(cache: _FieldCache, i: int, label: str, name: str) -> np.ndarray:
    dt = cache.series.dt
    return (getattr(cache(i + 1, label), name) - getattr(cache(i - 1, label), name)) / (2 * dt)


def _pos_cell(grid: ConfigurationGrid) -> float:
    return float(grid.position_cell_volume)


def _check_label(grid: ConfigurationGrid, label: str) -> None:
    if label != TOTAL:
        grid.sort(label)


# ---------------------------------------------------------------------------
# balance equations


def mpqhd_continuity_residual(series: SnapshotSeries, index: int, label: str, *,
                              potential: Potential | None = None, node_eps: float = NODE_EPS,
                              rho_eps: float = RHO_EPS, cache: _FieldCache | None = None) -> Residual:
    """r = d rho/dt + div j for sort ``label`` or the total (``'tot'``)."""
    i = series.check_centered(index)
    g = series.grid
    _check_label(g, label)
    c = _cache(series, potential, node_eps, rho_eps, cache)
    drho = _central(c, i, label, "rho")
    divj = lattice.position_divergence(c(i, label).j, g)
    return make_residual(drho + divj, {"d rho/dt": drho, "div j": divj}, _pos_cell(g))


def ehrenfest_residual(series: SnapshotSeries, index: int, label: str, potential: Potential, *,
                       node_eps: float = NODE_EPS, rho_eps: float = RHO_EPS,
                       cache: _FieldCache | None = None) -> Residual:
    """r = dj/dt - f + div Pi (vector field, shape ``(nu, *q_shape)``)."""
    i = series.check_centered(index)
    g = series.grid
    _check_label(g, label)
    c = _cache(series, potential, node_eps, rho_eps, cache)
    fs = c(i, label)
    djdt = _central(c, i, label, "j")
    divpi = lattice.position_divergence(fs.pi, g)
    res = djdt - fs.f + divpi
    return make_residual(res, {"dj/dt": djdt, "f": fs.f, "div Pi": divpi}, _pos_cell(g), lead=1)


@dataclass
class CauchyParts:
    """Left-hand side pieces and the residual of one Cauchy equation."""

    residual: Residual
    lhs: np.ndarray
    equivalence: Residual


def cauchy_parts(series: SnapshotSeries, index: int, label: str, potential: Potential, *,
                 node_eps: float = NODE_EPS, rho_eps: float = RHO_EPS,
                 cache: _FieldCache | None = None) -> CauchyParts:
    i = series.check_centered(index)
    g = series.grid
    _check_label(g, label)
    c = _cache(series, potential, node_eps, rho_eps, cache)
    fs = c(i, label)
    cell = _pos_cell(g)
    mask = fs.rho_mask
    v = fs.v
    drho = _central(c, i, label, "rho")
    djdt = _central(c, i, label, "j")
    divj = lattice.position_divergence(fs.j, g)
    flux = mq._outer_over_D(fs.j, fs.rho, mask)
    local = djdt - v * drho
    conv = lattice.position_divergence(flux, g) - v * divj
    divp = lattice.position_divergence(fs.p, g)
    lhs = local + conv
    res = lhs - fs.f + divp
    r = make_residual(res, {"rho dv/dt": local, "rho (v.grad)v": conv, "f": fs.f, "div p": divp},
                      cell, mask=mask, lead=1)
    if r.coverage < COVERAGE_WARN:
        log.warning("cauchy %s: only %.1f%% of the grid is above the density mask", label, r.coverage)
        r.flags.append("low-coverage")
    # algebraic equivalence with Ehrenfest and continuity
    r_e = djdt - fs.f + lattice.position_divergence(fs.pi, g)
    r_c = drho + divj
    diff = res - (r_e - v * r_c)
    eq_abs = l2(diff, cell, mask, lead=1)
    den = max(r.denominator, np.finfo(float).tiny)
    equiv = Residual(diff, eq_abs / den, eq_abs, den, r.coverage, True, {}, mask, [])
    return CauchyParts(r, lhs, equiv)


def cauchy_residual(series: SnapshotSeries, index: int, label: str, potential: Potential, **kw) -> Residual:
    """r = rho (d_t + v.grad) v - f + div p, off the density mask."""
    return cauchy_parts(series, index, label, potential, **kw).residual


def cauchy_equivalence_residual(series: SnapshotSeries, index: int, label: str, potential: Potential,
                                **kw) -> Residual:
    """Cauchy residual minus (Ehrenfest residual - v * continuity residual), relative to the Cauchy scale."""
    return cauchy_parts(series, index, label, potential, **kw).equivalence


# ---------------------------------------------------------------------------
# identities on a single snapshot


def quantum_potential_identity(psi: WavefunctionSnapshot, node_eps: float = NODE_EPS) -> tuple[float, float]:
    """Largest pointwise difference of the two V_qu forms relative to max |V_qu|, and coverage %."""
    va = bohm.quantum_potential_amplitude_form(psi, node_eps)
    vd = bohm.quantum_potential(bohm.density(psi), psi.grid, psi.hbar, node_eps)
    ok = ~np.isnan(va)
    scale = float(np.max(np.abs(va[ok])))
    diff = float(np.max(np.abs(va[ok] - vd[ok])))
    cov = 100.0 * np.count_nonzero(ok) / ok.size
    return (diff / scale if scale > 0 else diff), cov


def force_identity(psi: WavefunctionSnapshot, label: str, node_eps: float = NODE_EPS) -> Residual:
    """f_qu (direct reduction) against -div Pi^qu, relative L2."""
    g = psi.grid
    if label == TOTAL:
        direct = sum(mq.quantum_force_density(psi, s.label, node_eps) for s in g.sorts)
        pqu = sum(mq.momentum_flow_quantum(psi, s.label, node_eps) for s in g.sorts)
    else:
        direct = mq.quantum_force_density(psi, label, node_eps)
        pqu = mq.momentum_flow_quantum(psi, label, node_eps)
    tensor = mq.quantum_force_from_tensor(pqu, g)
    return make_residual(direct - tensor, {"f_qu": direct, "-div Pi_qu": tensor}, _pos_cell(g), lead=1)


# ---------------------------------------------------------------------------
# non-superposition of the Cauchy equations


@dataclass
class NonlinearityResult:
    cauchy_gap: float            # ||sum_A LHS^A - LHS^tot||
    cauchy_residual: float       # largest absolute Cauchy residual (per sort or total)
    ehrenfest_gap: float         # ||sum_A R_E^A - R_E^tot|| relative to the total Ehrenfest scale
    velocity_spread: float       # max |v^A - v^B| / max |v| on the common support
    inconclusive: bool
    flags: list[str] = field(default_factory=list)

    @property
    def ratio(self) -> float:
        return self.cauchy_gap / self.cauchy_residual if self.cauchy_residual > 0 else float("inf")

    @property
    def passed(self) -> bool:
        return (not self.inconclusive) and self.ratio >= 10.0 and self.ehrenfest_gap < 1e-10


def nonlinearity_demo(series: SnapshotSeries, index: int, potential: Potential, *,
                      node_eps: float = NODE_EPS, rho_eps: float = RHO_EPS,
                      cache: _FieldCache | None = None) -> NonlinearityResult:
    """Sum the per-sort Cauchy and Ehrenfest equations and compare with the total ones."""
    i = series.check_centered(index)
    g = series.grid
    c = _cache(series, potential, node_eps, rho_eps, cache)
    cell = _pos_cell(g)
    labels = [s.label for s in g.sorts]
    flags = []
    parts = {lab: cauchy_parts(series, i, lab, potential, cache=c) for lab in labels + [TOTAL]}
    mask = parts[TOTAL].residual.mask
    for lab in labels:
        mask = mask | parts[lab].residual.mask
    lhs_sum = sum(parts[lab].lhs for lab in labels)
    gap = l2(lhs_sum - parts[TOTAL].lhs, cell, mask, lead=1)
    cres = max(p.residual.absolute for p in parts.values())
    e = {lab: ehrenfest_residual(series, i, lab, potential, cache=c) for lab in labels + [TOTAL]}
    e_sum = sum(e[lab].field for lab in labels)
    e_gap = l2(e_sum - e[TOTAL].field, cell, None, lead=1) / max(e[TOTAL].denominator, np.finfo(float).tiny)
    vs = [np.where(mask, 0.0, c(i, lab).v) for lab in labels]
    vmax = max(float(np.max(np.abs(v))) for v in vs)
    spread = max((float(np.max(np.abs(a - b))) for k, a in enumerate(vs) for b in vs[k + 1:]), default=0.0)
    spread = spread / vmax if vmax > 0 else 0.0
    inconclusive = False
    if len(labels) < 2:
        flags.append("single-sort")
        inconclusive = True
    elif spread < 1e-8:
        flags.append("equal-velocities")
        inconclusive = True
    return NonlinearityResult(gap, cres, e_gap, spread, inconclusive, flags)


# ---------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceTable:
    parameter: str                 # "dt" or "n"
    resolutions: list[float]
    norms: list[float]
    order: float | None
    flags: list[str] = field(default_factory=list)

    def rows(self):
        return list(zip(self.resolutions, self.norms))


def fit_order(steps: Sequence[float], norms: Sequence[float]) -> float:
    """Least-squares slope of log(norm) against log(step)."""
    x = np.log(np.asarray(steps, dtype=float))
    y = np.log(np.asarray(norms, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def convergence_study(build: Callable[[float], SnapshotSeries], resolutions: Sequence[float],
                      evaluate: Callable[[SnapshotSeries], float], *, parameter: str = "dt",
                      floor: float = 1e-12) -> ConvergenceTable:
    """Evaluate a residual norm at each resolution and fit the observed order.

    ``parameter='dt'`` treats resolutions as step sizes; ``'n'`` as point
    counts (step ``1/n``).  Non-monotone decrease is flagged; if every norm is
    below ``floor`` the order is reported as None with flag ``"floor"``.
    """
    if len(resolutions) < 3:
        raise ValueError("a convergence study needs at least 3 resolutions")
    if parameter not in ("dt", "n"):
        raise ValueError("parameter must be 'dt' or 'n'")
    res = list(resolutions)
    norms = [float(evaluate(build(r))) for r in res]
    steps = [r if parameter == "dt" else 1.0 / r for r in res]
    order_idx = np.argsort(steps)[::-1]          # coarse to fine
    seq = [norms[k] for k in order_idx]
    flags = []
    if any(b > a for a, b in zip(seq, seq[1:])):
        flags.append("non-monotone")
    if all(nm < floor for nm in norms):
        flags.append("floor")
        return ConvergenceTable(parameter, res, norms, None, flags)
    return ConvergenceTable(parameter, res, norms, fit_order(steps, norms), flags)


# ---------------------------------------------------------------------------
# report


@dataclass
class ReportEntry:
    scenario: str
    equation: str
    sort: str
    resolution: dict
    norm: float
    denominator: float | None
    coverage: float
    order: float | None = None
    mode: str = "relative"
    tolerance: float | None = None
    flags: list[str] = field(default_factory=list)
    sense: str = "max"   # "max": norm must not exceed tolerance; "min": must reach it (p-values)

    @property
    def passed(self) -> bool:
        if self.tolerance is None:
            return True
        if not np.isfinite(self.norm):
            return False
        return self.norm <= self.tolerance if self.sense == "max" else self.norm >= self.tolerance

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario, "equation": self.equation, "sort": self.sort,
            "resolution": self.resolution, "norm": _num(self.norm),
            "denominator": _num(self.denominator), "coverage": _num(self.coverage),
            "order": _num(self.order), "mode": self.mode, "tolerance": _num(self.tolerance),
            "passed": self.passed, "flags": sorted(self.flags), "sense": self.sense,
        }


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else str(x)


@dataclass
class ResidualReport:
    entries: list[ReportEntry] = field(default_factory=list)
    convergence: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, entry: ReportEntry) -> None:
        self.entries.append(entry)

    def sorted_entries(self) -> list[ReportEntry]:
        return sorted(self.entries, key=lambda e: (e.scenario, e.equation, json.dumps(e.resolution, sort_keys=True),
                                                   e.sort))

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self) -> list[ReportEntry]:
        return [e for e in self.sorted_entries() if not e.passed]

    def to_json(self) -> str:
        doc = {
            "meta": self.meta,
            "entries": [e.to_dict() for e in self.sorted_entries()],
            "convergence": self.convergence,
            "passed": self.passed,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        head = f"{'scenario':<20} {'equation':<34} {'sort':<5} {'norm':>10} {'denom':>10} {'cov%':>6} {'tol':>8}  ok"
        lines = [head, "-" * len(head)]
        for e in self.sorted_entries():
            den = "-" if e.denominator is None else f"{e.denominator:.2e}"
            tol = "-" if e.tolerance is None else f"{e.tolerance:.0e}"
            mark = "yes" if e.passed else "NO"
            note = f"  [{', '.join(sorted(e.flags))}]" if e.flags else ""
            lines.append(f"{e.scenario:<20} {e.equation:<34} {e.sort:<5} {e.norm:>10.3e} {den:>10} "
                         f"{e.coverage:>6.1f} {tol:>8}  {mark}{note}")
        for c in self.convergence:
            lines.append("")
            lines.append(f"convergence {c['scenario']} {c['equation']} vs {c['parameter']}: "
                         f"order {c['order'] if c['order'] is None else format(c['order'], '.2f')}"
                         + (f" [{', '.join(c['flags'])}]" if c["flags"] else ""))
            for r, nm in zip(c["resolutions"], c["norms"]):
                lines.append(f"  {r:<12g} {nm:.3e}")
        return "\n".join(lines) + "\n"


DEFAULT_TOLERANCES = {
    "quantum_potential_identity": 1e-8,
    "quantum_potential_identity_float64": 1e-4,
    "bm_continuity": 1e-5,
    "bm_eulerian": 1e-4,
    "force_identity": 1e-5,
    "mpqhd_continuity": 1e-5,
    "ehrenfest": 1e-4,
    "cauchy": 1e-4,
    "cauchy_equivalence": 1e-10,
    "continuity_sum": 1e-12,
    "ehrenfest_sum": 1e-12,
}


def _entry(scn, eq, sort, resolution, r: Residual, tol) -> ReportEntry:
    return ReportEntry(scn, eq, sort, resolution, r.norm, r.denominator, r.coverage,
                       mode="relative" if r.relative else "absolute", tolerance=tol.get(eq), flags=list(r.flags))


def verify_series(series: SnapshotSeries, potential: Potential, *, scenario: str = "scenario",
                  index: int | None = None, tolerances: dict[str, float] | None = None,
                  node_eps: float = NODE_EPS, rho_eps: float = RHO_EPS,
                  extended: WavefunctionSnapshot | None = None) -> ResidualReport:
    """Every balance equation and identity at ``series[index]`` (middle snapshot by default).

    ``extended`` is an optional extended-precision sample of the same state
    used for the quantum-potential identity, which float64 data cannot
    resolve to 1e-8 in the tails.
    """
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    g = series.grid
    i = len(series) // 2 if index is None else index
    i = series.check_centered(i)
    psi = series[i]
    resolution = {"n": [a.n for a in g.position_axes], "dt": series.dt}
    rep = ResidualReport(meta={"scenario": scenario, "t": float(psi.t), "index": i,
                               "snapshots": len(series)})
    c = _FieldCache(series, potential, node_eps, rho_eps)

    if extended is not None:
        qp, cov = quantum_potential_identity(extended, node_eps)
        rep.add(ReportEntry(scenario, "quantum_potential_identity", "all", resolution, qp, None, cov,
                            mode="sup-relative", tolerance=tol["quantum_potential_identity"]))
    else:
        # double-precision data limits the identity to ~1e-6 at the mask edge
        qp, cov = quantum_potential_identity(psi, node_eps)
        rep.add(ReportEntry(scenario, "quantum_potential_identity_float64", "all", resolution, qp, None, cov,
                            mode="sup-relative", tolerance=tol["quantum_potential_identity_float64"]))

    rep.add(_entry(scenario, "bm_continuity", "all", resolution, bohm.bm_continuity_residual(series, i), tol))
    for p in g.particles:
        r = bohm.eulerian_motion_residual(series, i, p, potential, node_eps)
        rep.add(_entry(scenario, "bm_eulerian", f"{p.sort}{p.index}", resolution, r, tol))

    labels = [s.label for s in g.sorts] + [TOTAL]
    cont_fields = {}
    ehr_fields = {}
    for lab in labels:
        r = mpqhd_continuity_residual(series, i, lab, cache=c)
        cont_fields[lab] = r
        rep.add(_entry(scenario, "mpqhd_continuity", lab, resolution, r, tol))
        r = ehrenfest_residual(series, i, lab, potential, cache=c)
        ehr_fields[lab] = r
        rep.add(_entry(scenario, "ehrenfest", lab, resolution, r, tol))
        cp = cauchy_parts(series, i, lab, potential, cache=c)
        rep.add(_entry(scenario, "cauchy", lab, resolution, cp.residual, tol))
        rep.add(_entry(scenario, "cauchy_equivalence", lab, resolution, cp.equivalence, tol))
        rep.add(_entry(scenario, "force_identity", lab, resolution, force_identity(psi, lab, node_eps), tol))

    # linear equations: total residual equals the sum of the per-sort residuals
    sorts = labels[:-1]
    cell = _pos_cell(g)
    for eq, flds in (("continuity_sum", cont_fields), ("ehrenfest_sum", ehr_fields)):
        lead = flds[TOTAL].field.ndim - len(g.position_shape)
        diff = l2(sum(flds[s].field for s in sorts) - flds[TOTAL].field, cell, None, lead=lead)
        den = max(flds[s].denominator for s in labels)
        rep.add(ReportEntry(scenario, eq, TOTAL, resolution, diff / den if den > 0 else diff,
                            den if den > 0 else None, 100.0,
                            mode="relative" if den > 0 else "absolute",
                            tolerance=tol.get(eq, 1e-12)))

    if len(sorts) >= 2:
        nl = nonlinearity_demo(series, i, potential, cache=c)
        rep.add(ReportEntry(scenario, "cauchy_nonlinearity_ratio", TOTAL, resolution, nl.ratio, nl.cauchy_residual,
                            100.0, mode="ratio", tolerance=None,
                            flags=nl.flags + (["inconclusive"] if nl.inconclusive else [])))
    return rep


def bm_continuity_norm(series: SnapshotSeries) -> float:
    return bohm.bm_continuity_residual(series, len(series) // 2).norm
