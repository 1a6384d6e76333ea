"""SCF-type solvers and local convergence-rate analysis for NEPv
H(X) X = X Lambda whose coefficient matrix lacks unitary invariance."""

from .aligned import AlignedEvaluation, DgOperator, aligned_objective, dg, g_matrix
from .alignment import (
    AlignmentResult,
    CanonicalPolarBundle,
    DFactorization,
    RegularityReport,
    align,
    canonical_polar,
    d_canonical_polar,
    d_polar_full,
    factor_d,
    regularity_check,
)
from .errors import (
    CapabilityError,
    DefinitenessError,
    DegenerateProblemError,
    GapError,
    MispositionError,
    NepvError,
    OrthonormalityError,
    PositivityError,
    RankPreservingError,
    SingularScalingError,
    SymmetryError,
)
from .kernels import (
    SpectralRadiusResult,
    SvdResult,
    SymEigResult,
    TopKEigResult,
    principal_angles,
    sin_theta,
    solve_lyapunov_spd,
    spectral_radius,
    svd_econ,
    sym_eig,
    sym_eig_topk,
)
from .problems import (
    EigenPairBlock,
    NepvProblem,
    StiefelPoint,
    build_h,
    make_alpha_problem,
    make_theta_problem,
    nres,
    objective,
)
from .rates import (
    FdReport,
    RateEstimate,
    SolutionCertificate,
    apply_L,
    apply_L_shifted,
    apply_Q,
    certify,
    fd_validate,
    observed_rate,
    rho_L,
    sigma_lower,
    tail_rate,
)
from .solver import (
    ScfOptions,
    ScfReport,
    StepRecord,
    initial_guess_linear,
    run_level_shifted_scf,
    run_scf,
    scf_step,
)

__version__ = "0.1.0"
