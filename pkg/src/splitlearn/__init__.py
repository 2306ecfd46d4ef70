"""Learned operator-splitting integrators for the semi-discrete 1-D
Schrodinger equation: coefficient algebra with consistency and
time-reversal symmetry built in, spectral split-step propagation, exact
reference flows, data generation, gradient-based coefficient training and
cost-accuracy analysis."""

from .analysis import (
    AdvantageRow,
    ConvergenceRecord,
    ExpansionFit,
    OrderEstimate,
    advantage_table,
    convergence_study,
    empirical_order,
    fit_error_expansion,
    generalization_study,
)
from .coeffs import (
    PathPolyline,
    ReducedCoeffs,
    SchemeDescriptor,
    SplitCoeffs,
    check_consistency,
    check_symmetry,
    expand,
    load_scheme,
    named_scheme,
    order_residuals,
    path_segments,
    project_to_fourth_order,
    reduce_coeffs,
    repeat_scheme,
    save_scheme,
    scheme_names,
    transform_matrices,
    triple_jump,
)
from .data import (
    Dataset,
    DatasetMeta,
    DistributionParams,
    gaussian_state,
    generate_batch,
    load_dataset,
    load_states,
    named_distribution,
    save_dataset,
    save_states,
)
from .engine import BACKEND, FlowDivergenceError
from .reference import ReferencePropagator, build_reference, propagate_exact
from .spectral import (
    Grid,
    Potential,
    StepReport,
    apply_scheme,
    build_grid,
    build_hamiltonian,
    build_potential,
    kinetic_flow,
    named_potential,
    potential_flow,
    subflow_count,
)
from .train import (
    Leaderboard,
    OptimizerState,
    TrainConfig,
    adam_step,
    batch_loss,
    batch_loss_gradient,
    hessian_condition_number,
    run_pipeline,
    screen_candidates,
)

__version__ = "0.1.0"
