"""Stabilised hybrid high-order solver for the Oseen problem on polygonal meshes."""

from .analysis import (
    ErrorReport,
    compute_errors,
    compute_rate,
    infsup_diagnostic,
    norm_1h,
    norm_LP,
    norm_b,
    norm_eps,
    norm_st,
    norm_supg,
)
from .cases import (
    ManufacturedCase,
    case_boundary_layer,
    case_patch_test,
    case_smooth,
    get_case,
)
from .cli import StudyConfig, main, run_convergence_study
from .forms import OseenCoefficients, StabilisationParams, build_params
from .meshing import (
    MacroDecomposition,
    MeshFormatError,
    MeshValidationError,
    PolytopalMesh,
    build_macro_decomposition,
    generate_mesh,
    load_mesh,
    save_mesh,
)
from .operators import (
    advection_reconstruction,
    divergence_reconstruction,
    interpolate,
    velocity_reconstruction,
)
from .system import (
    Discretization,
    DiscreteSolution,
    GlobalSystem,
    assemble,
    dump_system,
    solve,
    solve_condensed,
    static_condensation,
)

__version__ = "0.1.0"

__all__ = [
    "ErrorReport",
    "compute_errors",
    "compute_rate",
    "infsup_diagnostic",
    "norm_1h",
    "norm_LP",
    "norm_b",
    "norm_eps",
    "norm_st",
    "norm_supg",
    "ManufacturedCase",
    "case_boundary_layer",
    "case_patch_test",
    "case_smooth",
    "get_case",
    "StudyConfig",
    "main",
    "run_convergence_study",
    "OseenCoefficients",
    "StabilisationParams",
    "build_params",
    "MacroDecomposition",
    "MeshFormatError",
    "MeshValidationError",
    "PolytopalMesh",
    "build_macro_decomposition",
    "generate_mesh",
    "load_mesh",
    "save_mesh",
    "advection_reconstruction",
    "divergence_reconstruction",
    "interpolate",
    "velocity_reconstruction",
    "Discretization",
    "DiscreteSolution",
    "GlobalSystem",
    "assemble",
    "dump_system",
    "solve",
    "solve_condensed",
    "static_condensation",
    "__version__",
]
