"""Inexact augmented Lagrangian solver for convex programs with affine
equality and smooth inequality constraints, with an accelerated proximal
gradient inner solver, evaluation-budget accounting and certified
convergence diagnostics."""

from . import apg, auglag, certificates, driver, kernels, problem, qcqp
from .apg import ApgConfig, ApgResult, alpha_next, momentum_weight
from .auglag import al_evaluate, lipschitz_estimate, psi, psi_partial_u, spectral_norm_ata
from .certificates import (
    BoundCheck,
    Certificate,
    TheoryConstants,
    c_beta_sufficiency,
    certify_trace,
    derive_constants,
    eps_optimality,
    ergodic_bound,
    iteration_budget,
    kkt_residual,
    nonergodic_bound,
)
from .driver import (
    ErrorMode,
    InnerConfig,
    Schedule,
    Setting,
    SolveTrace,
    build_schedule,
    ergodic_average,
    run,
    update_multipliers,
)
from .problem import (
    ConvexProgram,
    EvalCounters,
    check_lipschitz_by_sampling,
    feasibility_violation,
)
from .qcqp import (
    QcqpInstance,
    Reference,
    generate_instance,
    inner_termination,
    qcqp_as_program,
    reference_solve,
    run_experiment,
    transform_equalities_to_inequalities,
)

__version__ = "0.1.0"
