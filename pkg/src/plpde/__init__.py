"""Numerics for fully nonlinear elliptic equations of partial-Laplacian type
on flat Hermitian model geometries."""

__version__ = "0.1.0"

from .errors import (
    AdmissibilityError,
    ConfigurationError,
    DomainError,
    HomotopyStall,
    LinearSolveFailure,
    NewtonStall,
    ProbeInconclusive,
)
from .symcalc import (
    IndexSetFamily,
    OperatorSpec,
    composite_eval,
    composite_grad,
    enumerate_index_sets,
    f_eval,
    f_grad,
    f_hessian_action,
    lambda_map,
    lambda_prime,
    rho_k,
    sigma_k,
)
from .conegeo import (
    ConeSpec,
    Membership,
    RankCertificate,
    c1_estimate,
    cone_membership,
    level_set_sample,
    rank_condition_check,
    rank_probe,
)
from .hermfield import (
    FlatTorus,
    HermitianField,
    Interval,
    ScalarField,
    SpectralField,
    assemble_g,
    complex_hessian,
    dump_field,
    linearization_coefficients,
    load_field,
    spectral_decompose,
)
from .solver import (
    BarrierResult,
    ProblemSpec,
    SolveState,
    barrier_solve,
    dirichlet_solve,
    homotopy_solve,
    mms_generate,
    newton_step,
    residual,
    riccati_oracle,
    validate_problem,
)
from .estimates import (
    EstimateReport,
    build_report,
    measure_c2,
    measure_gradient,
    measure_harnack,
)

__all__ = [
    "AdmissibilityError",
    "BarrierResult",
    "ConeSpec",
    "ConfigurationError",
    "DomainError",
    "EstimateReport",
    "FlatTorus",
    "HermitianField",
    "HomotopyStall",
    "IndexSetFamily",
    "Interval",
    "LinearSolveFailure",
    "Membership",
    "NewtonStall",
    "OperatorSpec",
    "ProbeInconclusive",
    "ProblemSpec",
    "RankCertificate",
    "ScalarField",
    "SolveState",
    "SpectralField",
    "assemble_g",
    "barrier_solve",
    "build_report",
    "c1_estimate",
    "complex_hessian",
    "composite_eval",
    "composite_grad",
    "cone_membership",
    "dirichlet_solve",
    "dump_field",
    "enumerate_index_sets",
    "f_eval",
    "f_grad",
    "f_hessian_action",
    "homotopy_solve",
    "lambda_map",
    "lambda_prime",
    "level_set_sample",
    "linearization_coefficients",
    "load_field",
    "measure_c2",
    "measure_gradient",
    "measure_harnack",
    "mms_generate",
    "newton_step",
    "rank_condition_check",
    "rank_probe",
    "residual",
    "rho_k",
    "riccati_oracle",
    "sigma_k",
    "spectral_decompose",
    "validate_problem",
    "__version__",
]
