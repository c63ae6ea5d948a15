"""Modal finite-element lab for a two-dimensional piezoelectric beam with magnetic
effect and damping localized in ``x``.

The transverse direction is diagonalized by the sine family ``e_j``; each mode
is a one-dimensional Galerkin problem in ``x``. Submodules:

``model``     material constants, damping profile, transverse basis
``assembly``  P1 matrices, per-mode generator and energy Gram
``dynamics``  trapezoidal (Cayley) time stepping and energy bookkeeping
``analysis``  spectra, resolvent sweeps, decay-rate fits
``oracle``    dispersion relation and matrix-exponential references
``cli``       command-line front end (``piezomodal``)
"""

from .assembly import (
    Grid1D,
    ModalOperator,
    OperatorMatrices,
    PiezoSystem,
    assemble_modal_operator,
    build_matrices,
    energy_norm,
    full_norm,
    quadratic_form_terms,
    read_coordinate,
    write_coordinate,
)
from .analysis import (
    AbscissaTable,
    DecayFitReport,
    PowerLawFit,
    Quasimode,
    ResolventReport,
    SpectralReport,
    abscissa_sweep,
    decay_fit,
    fit_power_law,
    log_lambda_grid,
    quasimode_diagnostics,
    resolvent_norm,
    resolvent_sweep,
    spectral_report,
    spectrum,
    sweep_modes,
)
from .dynamics import (
    CayleyStepper,
    EnergySample,
    ModalState,
    SimulationSeries,
    energy_budget_residual,
    modal_energy,
    project_initial,
    reconstruct_field,
    simulate,
    smooth_initial_state,
    step,
)
from .errors import (
    ConfigError,
    DegenerateFit,
    DimensionMismatch,
    EigSolveFailure,
    FactorizationFailure,
    LinearSolveFailure,
    ModeCutoffSuspect,
    NonPositiveParameter,
    NumericalFailure,
    OverScaleLimit,
    PiezoModalError,
    QuadratureUnderResolved,
    SingularMass,
    StiffnessBelowCoupling,
)
from .model import (
    DEFAULT_PARAMS,
    DEFAULT_PROFILE,
    DampingProfile,
    ModeIndex,
    PhysicalParams,
    basis,
    damping_eval,
    validate_params,
    xi,
)
from .oracle import (
    ConvergenceStudy,
    DispersionRoots,
    convergence_study,
    dense_expm_propagate,
    dispersion_residual,
    undamped_frequencies,
)

__version__ = "0.1.0"
