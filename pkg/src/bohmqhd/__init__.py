"""Bohmian-mechanics and many-particle quantum hydrodynamic fields on grids.

Layers, bottom up: :mod:`lattice` (configuration grid and spectral
calculus), :mod:`model` (potentials), :mod:`states` (closed-form states and
oracles), :mod:`propagator` (split-operator evolution), :mod:`bohm`
(configuration-space fields and equations), :mod:`mpqhd` (single-position
fields per sort and in total), :mod:`verify` (residuals and reports),
:mod:`trajectories`, :mod:`scenario` and :mod:`cli`.
"""

from .bohm import (bm_continuity_residual, bohm_fields, current, density, eulerian_motion_residual,
                   osmotic_velocity, quantum_potential, quantum_potential_amplitude_form, velocity)
from .lattice import AxisSpec, ConfigurationGrid, GridError, ParticleIndex, SortSpec
from .model import Harmonic, Potential, SoftCoulomb, UniformField
from .mpqhd import MpqhdFieldSet, all_fields, sort_fields, totals
from .propagator import Propagator, evolve, step
from .scenario import Scenario, ScenarioError, list_scenarios, load_scenario, preset
from .snapshot import (BoundaryLeakError, SnapshotFormatError, SnapshotSeries, WavefunctionSnapshot,
                       read_series, write_series)
from .states import CoherentState, GaussianPacket, HarmonicEigenstate, StateSpec, sample_state
from .trajectories import TrajectoryBundle, integrate_trajectories, sample_seeds
from .verify import (ResidualReport, cauchy_residual, convergence_study, ehrenfest_residual,
                     mpqhd_continuity_residual, nonlinearity_demo, verify_series)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
