"""Bending-torsion rod models extracted from thin 3D elastic beams.

Pipeline: cross-section cell problems build the limit stiffness form Q1;
a rotation-field solver minimizes the limit rod energy J2; a 3D prism-element
solver minimizes J^h at finite thickness; the harness sweeps h and checks that
the 3D equilibria approach the rod equilibrium.
"""

from .material import (
    AxiomCheck,
    AxiomReport,
    ElasticityTensor,
    EnergyDensity,
    EnergyDomainError,
    check_axioms,
    energy,
    isotropic_elasticity,
    linearized_tensor,
    q3,
    squared_distance_to_rotations,
    stress,
)
from .cross_section import (
    CellSolveError,
    CrossSectionMesh,
    MeshFormatError,
    MeshGeometryError,
    Q1Form,
    SectionTransform,
    WarpingField,
    assemble_q1,
    bending_moments,
    generate_disc,
    load_mesh,
    moment_map,
    normalize_section,
    q1_eval,
    solve_cell_problem,
    stress_field,
)
from .rod1d import (
    LoadProfile,
    ResidualReport,
    RodConfig,
    RodSolveError,
    SolverOptions,
    curvature_torsion,
    el_residual,
    elastic_energy_j2,
    energy_j2,
    frame_from_rotations,
    minimize_j2,
    tilde_g,
)
from .beam3d import (
    BeamMesh,
    BeamSolveError,
    BeamSolverOptions,
    BeamState,
    DiagnosticFields,
    JhEnergy,
    compute_diagnostics,
    energy_jh,
    extract_rotations,
    identity_state,
    minimize_jh,
    moments_3d,
    rod_lift_state,
    scaled_gradient,
    strain_g,
    stress_e,
)
from .harness import (
    ConvergenceReport,
    ExperimentConfig,
    HarnessError,
    InsufficientDataError,
    RowResult,
    Verdict,
    compare_equilibria,
    emit_report,
    run_convergence,
)

__version__ = "0.1.0"

__all__ = [
    "AxiomCheck",
    "AxiomReport",
    "BeamMesh",
    "BeamSolveError",
    "BeamSolverOptions",
    "BeamState",
    "CellSolveError",
    "ConvergenceReport",
    "CrossSectionMesh",
    "DiagnosticFields",
    "ElasticityTensor",
    "EnergyDensity",
    "EnergyDomainError",
    "ExperimentConfig",
    "HarnessError",
    "InsufficientDataError",
    "JhEnergy",
    "LoadProfile",
    "MeshFormatError",
    "MeshGeometryError",
    "Q1Form",
    "ResidualReport",
    "RodConfig",
    "RodSolveError",
    "RowResult",
    "SectionTransform",
    "SolverOptions",
    "Verdict",
    "WarpingField",
    "assemble_q1",
    "bending_moments",
    "check_axioms",
    "compare_equilibria",
    "compute_diagnostics",
    "curvature_torsion",
    "el_residual",
    "elastic_energy_j2",
    "emit_report",
    "energy",
    "energy_j2",
    "energy_jh",
    "extract_rotations",
    "frame_from_rotations",
    "generate_disc",
    "identity_state",
    "isotropic_elasticity",
    "linearized_tensor",
    "load_mesh",
    "minimize_j2",
    "minimize_jh",
    "moment_map",
    "moments_3d",
    "normalize_section",
    "q1_eval",
    "q3",
    "rod_lift_state",
    "run_convergence",
    "scaled_gradient",
    "solve_cell_problem",
    "squared_distance_to_rotations",
    "strain_g",
    "stress",
    "stress_e",
    "stress_field",
    "tilde_g",
]
