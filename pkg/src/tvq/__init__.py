"""Fibonacci Turaev-Viro code toolkit.

Simulates string-net states on triangulated surfaces, rewrites the
triangulation with exact Pachner-move unitaries/isometries, runs the
constant-depth braiding protocol against its sequential baseline, lowers
moves to gate-level circuits, and analyzes error-string propagation.
"""

from .circuits import (
    Gate,
    GateCircuit,
    compile_fmove,
    compile_pachner13,
    compile_schedule,
    export_circuit,
    import_circuit,
    inverse_circuit,
    simulate_circuit,
)
from .errors import (
    ErrorString,
    error_string,
    grid_span,
    lightcone_grow,
    lightcone_radius_bound,
    propagate_cpi,
    report_to_csv,
    report_to_json,
    stretch_report,
)
from .fusion import (
    PHI,
    FusionData,
    fibonacci_data,
    fusion_from_json,
    fusion_to_json,
    trivial_data,
    vacuum_s_vector,
    verify_f_unitarity,
    verify_pentagon_coherence,
)
from .gadgets import (
    DepthReport,
    MoveGroup,
    MoveSchedule,
    baseline_schedule,
    braid_schedule,
    encoded_basis,
    logical_action,
    merge_rows,
    run_schedule,
    shear_step,
    split_row,
)
from .lattice import (
    MoveError,
    SurfaceLattice,
    apply_cpi,
    build_honeycomb_torus,
    build_planar_patch,
    build_tetra_sphere,
    build_theta_sphere,
    lattice_from_json,
    lattice_to_json,
    pachner_13,
    pachner_22,
    pachner_31,
    polar_vertex_id,
)
from .statevec import (
    StringNetState,
    apply_bp,
    apply_fmove,
    apply_pachner13,
    apply_pachner31,
    apply_qv,
    apply_state_permutation,
    code_space_dim,
    enumerate_valid_configs,
    ground_project,
    inner,
    make_delta_state,
    make_state,
    random_valid_state,
    rebind_state,
)

__all__ = [
    "DepthReport",
    "ErrorString",
    "FusionData",
    "Gate",
    "GateCircuit",
    "MoveError",
    "MoveGroup",
    "MoveSchedule",
    "PHI",
    "StringNetState",
    "SurfaceLattice",
    "apply_bp",
    "apply_cpi",
    "apply_fmove",
    "apply_pachner13",
    "apply_pachner31",
    "apply_qv",
    "apply_state_permutation",
    "baseline_schedule",
    "braid_schedule",
    "build_honeycomb_torus",
    "build_planar_patch",
    "build_tetra_sphere",
    "build_theta_sphere",
    "code_space_dim",
    "compile_fmove",
    "compile_pachner13",
    "compile_schedule",
    "encoded_basis",
    "enumerate_valid_configs",
    "error_string",
    "export_circuit",
    "fibonacci_data",
    "fusion_from_json",
    "fusion_to_json",
    "grid_span",
    "ground_project",
    "import_circuit",
    "inner",
    "inverse_circuit",
    "lattice_from_json",
    "lattice_to_json",
    "lightcone_grow",
    "lightcone_radius_bound",
    "logical_action",
    "make_delta_state",
    "make_state",
    "merge_rows",
    "pachner_13",
    "pachner_22",
    "pachner_31",
    "polar_vertex_id",
    "propagate_cpi",
    "random_valid_state",
    "rebind_state",
    "report_to_csv",
    "report_to_json",
    "run_schedule",
    "shear_step",
    "simulate_circuit",
    "split_row",
    "stretch_report",
    "trivial_data",
    "vacuum_s_vector",
    "verify_f_unitarity",
    "verify_pentagon_coherence",
]

__version__ = "0.1.0"
