"""stiefelflow: global optimization under orthogonality constraints.

Noisy gradient flow on Stiefel manifolds integrated by orthogonality-
preserving Cayley steps, an intermittent-diminishing-diffusion global
driver with a curvilinear Barzilai-Borwein local solver, benchmark
objective families, and a verification suite for the underlying geometric
and stochastic identities.

Conventions: all matrices are float64 numpy arrays in row-major (C)
element order; a point on the manifold is an n-by-p matrix X with
X^T X = I_p.
"""

from ._core import BACKEND
from .errors import (
    ConfigurationError,
    ContractViolationError,
    DimensionError,
    DivergedRunError,
    GraphParseError,
    InitializationError,
    NumericalRankError,
    StiefelflowError,
)
from .iddm import CycleRecord, IddmConfig, iddm_run, incumbent_update
from .local_solver import (
    LocalSolverConfig,
    RunReport,
    SolveStats,
    local_minimize,
    rslocal_run,
)
from .manifold import (
    ALPHA,
    BETA,
    ProductPoint,
    ProjectionCoefficients,
    StiefelPoint,
    TangentVector,
    canonical_gradient,
    canonical_inner,
    canonical_norm,
    cayley_step,
    cayley_step_smw,
    check_feasible,
    project_tangent,
    qr_retract,
    random_point,
    random_tangent,
)
from .rng import RngStream
from .schedules import CDD, Constant, PiecewiseConstant, PowerLaw, schedule_sigma
from .sde import (
    SdeConfig,
    Trajectory,
    brownian_increment,
    sde_simulate,
    sde_simulate_product,
    sde_step,
)

__version__ = "0.1.0"
