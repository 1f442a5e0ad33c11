"""Gauge-invariant thermodynamics of driven closed quantum systems.

Work and heat are defined with a covariant derivative built from the
instantaneous eigenframe, so they are unchanged by any unitary that commutes
with the Hamiltonian (the thermodynamic group).
"""

__version__ = "0.1.0"

from .dynamics import (
    HamiltonianFamilySpec,
    IntervalPartition,
    TrajectoryGrid,
    assemble_trajectory,
    build_family,
    detect_degeneracy_changes,
    evolve_closed,
    trajectory_from_hamiltonians,
)
from .functionals import (
    FirstLawError,
    ThermoRecord,
    energy_change,
    first_law_report,
    invariant_heat,
    invariant_work,
    work_spectral_oracle,
)
from .operators import DimensionError, InvariantError, ThermoGaugeError
from .spectral import (
    DegeneracyStructure,
    EigenFrame,
    FrameDiscontinuityError,
    cluster_degeneracies,
    covariant_derivative,
    eigenframe,
    gauge_potential,
    track_frames,
)
from .thermo_group import (
    ThermodynamicGroup,
    gauge_entropy,
    haar_average,
    invariant_functional,
    sample_haar,
    thermodynamic_group,
    twirl,
)

__all__ = [
    "DegeneracyStructure",
    "DimensionError",
    "EigenFrame",
    "FirstLawError",
    "FrameDiscontinuityError",
    "HamiltonianFamilySpec",
    "IntervalPartition",
    "InvariantError",
    "ThermoGaugeError",
    "ThermoRecord",
    "ThermodynamicGroup",
    "TrajectoryGrid",
    "assemble_trajectory",
    "build_family",
    "cluster_degeneracies",
    "covariant_derivative",
    "detect_degeneracy_changes",
    "eigenframe",
    "energy_change",
    "evolve_closed",
    "first_law_report",
    "gauge_entropy",
    "gauge_potential",
    "haar_average",
    "invariant_functional",
    "invariant_heat",
    "invariant_work",
    "sample_haar",
    "thermodynamic_group",
    "track_frames",
    "trajectory_from_hamiltonians",
    "twirl",
    "work_spectral_oracle",
]
