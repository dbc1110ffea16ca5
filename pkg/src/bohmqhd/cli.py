"""Command-line front end: ``bohmqhd list | run | import``.

Exit status: 0 when every checked quantity is within tolerance, 2 when at
least one tolerance is exceeded, 1 on operational errors (bad config,
boundary leak, unreadable snapshot, I/O failure).

``BOHMQHD_THREADS`` sets the number of FFT worker threads (default 1).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
import scipy.fft as sfft
import yaml

from . import export, mpqhd, trajectories, verify
from .model import Potential
from .scenario import PRESETS, Scenario, ScenarioError, list_scenarios, load_scenario, preset
from .snapshot import BoundaryLeakError, SnapshotFormatError, SnapshotSeries, read_series, write_series
from .verify import ReportEntry, ResidualReport

log = logging.getLogger("bohmqhd")

STAGES = ("propagate", "fields", "verify", "trajectories", "convergence")
DEFAULT_STAGES = ("propagate", "fields", "verify", "trajectories")
THREADS_ENV = "BOHMQHD_THREADS"

EXIT_OK, EXIT_ERROR, EXIT_TOLERANCE = 0, 1, 2


def package_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover - running from a source tree
        return "0+unknown"


def _stages(text: str) -> list[str]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise argparse.ArgumentTypeError("stage list must not be empty")
    bad = [s for s in items if s not in STAGES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown stage(s) {bad}; choose from {', '.join(STAGES)}")
    return [s for s in STAGES if s in items]


def _grid_override(text: str) -> dict:
    out = {}
    for part in text.split(","):
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep or key not in ("n", "lo", "hi"):
            raise argparse.ArgumentTypeError(f"expected n=..., lo=... or hi=..., got {part!r}")
        try:
            out[key] = int(val) if key == "n" else float(val)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad value in {part!r}") from exc
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bohmqhd", description="Bohmian and many-particle hydrodynamic field checks")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="print the built-in scenario presets")

    r = sub.add_parser("run", help="run a scenario pipeline")
    r.add_argument("--scenario", required=True, help="scenario file (YAML/JSON) or preset name")
    r.add_argument("--stages", type=_stages, default=list(DEFAULT_STAGES),
                   help=f"comma-separated subset of {','.join(STAGES)} (default: {','.join(DEFAULT_STAGES)})")
    r.add_argument("--out", default="out", help="output directory (created if missing)")
    r.add_argument("--seed", type=int, default=0, help="seed for trajectory sampling")
    r.add_argument("--grid-override", type=_grid_override, default={}, metavar="n=...",
                   help="override grid points per axis (and optionally lo=, hi=)")
    r.add_argument("--dt-override", type=float, default=None, metavar="DT", help="override the snapshot spacing")
    r.add_argument("--tolerances", default=None, metavar="FILE", help="YAML/JSON mapping equation -> tolerance")

    i = sub.add_parser("import", help="verify a snapshot series written in the binary snapshot format")
    i.add_argument("snapshots", help="snapshot file")
    i.add_argument("--scenario", default=None, help="scenario or preset supplying the potential (default: free)")
    i.add_argument("--out", default="out", help="output directory")
    i.add_argument("--stages", type=_stages, default=["fields", "verify"], help="fields and/or verify")
    i.add_argument("--tolerances", default=None, metavar="FILE")
    return p


def _load(spec: str) -> Scenario:
    if spec in PRESETS and not Path(spec).exists():
        return preset(spec)
    path = Path(spec)
    if not path.exists():
        raise ScenarioError("", f"no scenario file or preset named {spec!r}")
    return load_scenario(path)


def _apply_overrides(s: Scenario, grid: dict, dt: float | None) -> Scenario:
    if not grid and dt is None:
        return s
    return s.with_overrides(dt=dt, **grid)


def _tolerances(s: Scenario | None, path: str | None) -> dict:
    tol = dict(verify.DEFAULT_TOLERANCES)
    tol.update(TRAJECTORY_TOLERANCES)
    if s is not None:
        tol.update(s.tolerances)
    if path:
        data = yaml.safe_load(Path(path).read_text())
        if not isinstance(data, dict) or not all(isinstance(v, (int, float)) for v in data.values()):
            raise ScenarioError("tolerances", f"{path} must map equation names to numbers")
        tol.update({k: float(v) for k, v in data.items()})
    return tol


TRAJECTORY_TOLERANCES = {"trajectory_chi_square_p": 0.01, "bm_continuity_time_order": 0.3}


def _write_fields(out: Path, series: SnapshotSeries, potential: Potential, node_eps: float, rho_eps: float) -> list[str]:
    fdir = out / "fields"
    fdir.mkdir(parents=True, exist_ok=True)
    psi = series[len(series) // 2]
    files = []
    sets = mpqhd.all_fields(psi, potential, node_eps=node_eps, rho_eps=rho_eps)
    for label, fs in sets.items():
        export.write_mpqhd_fields(fdir / f"mpqhd_{label}.csv", fs, psi.grid)
        files.append(f"fields/mpqhd_{label}.csv")
    export.write_bohm_fields(fdir / "bohm.csv", psi, node_eps)
    files.append("fields/bohm.csv")
    return files


def _trajectory_entries(s: Scenario, series: SnapshotSeries, seed: int, out: Path, tol: dict) -> list[ReportEntry]:
    rng = np.random.default_rng(seed)
    seeds = trajectories.sample_seeds(series[0], s.trajectory_count, rng)
    bundle = trajectories.integrate_trajectories(series, seeds, substeps=s.trajectory_substeps, node_eps=s.node_eps)
    bundle.to_csv(out / "trajectories.csv", s.grid.axis_names())
    res = {"n": [a.n for a in s.grid.position_axes], "dt": series.dt}
    stat, p, nb = trajectories.density_chi_square(bundle, series[-1])
    flags = []
    lost = int(np.count_nonzero(~bundle.active))
    if lost:
        flags.append(f"stopped={lost}")
    entries = [ReportEntry(s.name, "trajectory_chi_square_p", "all", res, p, None,
                           100.0 * bundle.active.mean(), mode="p-value", sense="min",
                           tolerance=tol.get("trajectory_chi_square_p"), flags=flags)]
    if s.grid.ndim == 1:
        ok = trajectories.ordering_preserved(bundle)
        entries.append(ReportEntry(s.name, "trajectory_ordering_violations", "all", res, 0.0 if ok else 1.0, None,
                                   100.0, mode="count", tolerance=0.0))
    return entries


def _convergence(s: Scenario, tol: dict) -> tuple[dict, ReportEntry]:
    dts = [4 * s.dt, 2 * s.dt, s.dt]
    table = verify.convergence_study(lambda dt: s.with_overrides(dt=dt).series(), dts,
                                     verify.bm_continuity_norm, parameter="dt")
    row = {"scenario": s.name, "equation": "bm_continuity", "parameter": "dt",
           "resolutions": dts, "norms": table.norms, "order": table.order, "flags": table.flags}
    res = {"n": [a.n for a in s.grid.position_axes], "dt": dts}
    if table.order is None:
        entry = ReportEntry(s.name, "bm_continuity_time_order", "all", res, 0.0, None, 100.0, order=None,
                            mode="order-deviation", tolerance=None, flags=table.flags)
    else:
        entry = ReportEntry(s.name, "bm_continuity_time_order", "all", res, abs(table.order - 2.0), None, 100.0,
                            order=table.order, mode="order-deviation",
                            tolerance=tol.get("bm_continuity_time_order"), flags=table.flags)
    return row, entry


def _finish(out: Path, report: ResidualReport | None, manifest: dict) -> int:
    if report is not None:
        (out / "report.json").write_text(report.to_json())
        (out / "report.txt").write_text(report.to_text())
        manifest["files"] += ["report.json", "report.txt"]
        manifest["passed"] = report.passed
    manifest["files"] = sorted(manifest["files"])
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if report is not None:
        sys.stdout.write(report.to_text())
        if not report.passed:
            for e in report.failures():
                print(f"tolerance exceeded: {e.scenario} {e.equation} {e.sort}: {e.norm:.3e} "
                      f"(limit {e.tolerance:g})", file=sys.stderr)
            return EXIT_TOLERANCE
    return EXIT_OK


def cmd_run(args) -> int:
    s = _apply_overrides(_load(args.scenario), args.grid_override, args.dt_override)
    tol = _tolerances(s, args.tolerances)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"command": "run", "scenario": s.name, "config": s.config, "stages": args.stages,
                "seed": args.seed, "version": package_version(),
                "overrides": {"grid": args.grid_override, "dt": args.dt_override}, "files": []}
    log.info("scenario %s: %d snapshots on %s", s.name, s.steps + 1, s.grid.shape)
    series = s.series()
    if "propagate" in args.stages:
        write_series(out / "snapshots.bin", series)
        manifest["files"].append("snapshots.bin")
    if "fields" in args.stages:
        manifest["files"] += _write_fields(out, series, s.potential, s.node_eps, s.rho_eps)
    report = None
    if any(st in args.stages for st in ("verify", "trajectories", "convergence")):
        report = ResidualReport(meta={"scenario": s.name, "seed": args.seed, "version": package_version()})
    if "verify" in args.stages:
        ext = s.initial_state(np.clongdouble)
        vr = verify.verify_series(series, s.potential, scenario=s.name, tolerances=tol, node_eps=s.node_eps,
                                  rho_eps=s.rho_eps, extended=ext)
        report.entries += vr.entries
        report.meta.update({k: v for k, v in vr.meta.items() if k != "scenario"})
    if "trajectories" in args.stages:
        report.entries += _trajectory_entries(s, series, args.seed, out, tol)
        manifest["files"].append("trajectories.csv")
    if "convergence" in args.stages:
        row, entry = _convergence(s, tol)
        report.convergence.append(row)
        report.entries.append(entry)
    return _finish(out, report, manifest)


def cmd_import(args) -> int:
    series = read_series(args.snapshots)
    s = _load(args.scenario) if args.scenario else None
    potential = s.potential if s is not None else Potential()
    if s is None:
        log.warning("no scenario given; verifying against the free Hamiltonian")
    tol = _tolerances(s, args.tolerances)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = Path(args.snapshots).stem
    manifest = {"command": "import", "source": str(args.snapshots), "scenario": s.name if s else None,
                "stages": args.stages, "version": package_version(), "files": []}
    node_eps = s.node_eps if s else verify.NODE_EPS
    rho_eps = s.rho_eps if s else verify.RHO_EPS
    if "fields" in args.stages:
        manifest["files"] += _write_fields(out, series, potential, node_eps, rho_eps)
    report = None
    if "verify" in args.stages:
        report = verify.verify_series(series, potential, scenario=name, tolerances=tol,
                                      node_eps=node_eps, rho_eps=rho_eps)
        report.meta.update({"version": package_version()})
    return _finish(out, report, manifest)


def cmd_list() -> int:
    for name, desc in list_scenarios().items():
        print(f"{name:<22} {desc}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    except ValueError:
        print(f"error: {THREADS_ENV} must be an integer", file=sys.stderr)
        return EXIT_ERROR
    try:
        with sfft.set_workers(max(1, threads)):
            if args.command == "list":
                return cmd_list()
            if args.command == "run":
                return cmd_run(args)
            return cmd_import(args)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
    except BoundaryLeakError as exc:
        print(f"error: boundary leak: {exc}", file=sys.stderr)
    except SnapshotFormatError as exc:
        print(f"error: bad snapshot file: {exc}", file=sys.stderr)
    except (OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
