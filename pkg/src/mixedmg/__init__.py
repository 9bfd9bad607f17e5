"""Mixed-precision two-grid/multigrid solvers with certified rounding-error bounds.

The package has three layers: :mod:`mixedmg.precision` emulates reduced
floating-point formats with kernels that return a-priori error bounds
alongside results; :mod:`mixedmg.linops`, :mod:`mixedmg.hierarchy` and
:mod:`mixedmg.cycles` provide the instrumented two-grid/V-cycle solvers on
normalized model-problem hierarchies; :mod:`mixedmg.bounds` and
:mod:`mixedmg.harness` evaluate the closed-form error constants and
validate them empirically on randomized trials.
"""

from .bounds import (
    BoundInputs,
    BoundReport,
    PROOF_LINES,
    compute_constants,
    delta_rho_tg,
    gamma_constants,
    per_line_bounds,
    progressive_epsilon,
)
from .cycles import (
    ContractionError,
    CoarseSolver,
    CycleTrace,
    RelaxationOp,
    coarse_complement_projector,
    exact_tg_reference,
    make_exact_coarse,
    make_jacobi,
    make_perturbed_coarse,
    make_recursive_coarse,
    make_richardson,
    measure_bc_deviation,
    projector_energy_norm,
    rho_star,
    tg_cycle,
    v_cycle,
)
from .cli import cli_main
from .harness import (
    ExperimentConfig,
    TrialRecord,
    load_config,
    progressive_study,
    run_experiment,
    validate_csv,
    write_csv,
)
from .hierarchy import (
    GridLevel,
    build_multilevel,
    bilinear_interpolation,
    galerkin_coarse,
    linear_interpolation,
    normalize_hierarchy,
    poisson_1d,
    poisson_2d,
    save_hierarchy,
)
from .linops import (
    OperatorConstants,
    SparseSpd,
    SpdError,
    abs_matrix_norm,
    condition_number,
    energy_norm,
    energy_operator_norm,
    mdot_plus,
    read_matrix_market,
    solve_spd,
    spectral_norm,
)
from .precision import (
    CARRIER,
    CARRIER_BITS,
    PrecisionFormat,
    PrecisionTooLowError,
    PrecisionUnachievableError,
    RoundedResult,
    quantize_vector,
    round_scalar,
    round_vector,
    rounded_add_sub,
    rounded_matvec,
    rounded_residual,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
