"""Algebraic convolutional signal processing in reproducing kernel Hilbert spaces."""

from .domain_ops import (
    Center,
    ComponentwiseProduct2D,
    CyclicSum,
    DomainOp,
    ModularSum01,
    Planar,
    Rotation3,
    Scalar,
    SphereRotation,
    Translation1D,
    Translation2D,
    UnitInterval,
    UnitIntervalProduct,
    center_distance,
    op_from_json,
    rotation_about_z,
)
from .errors import (
    DegenerateDenominatorError,
    DegenerateKernelError,
    DomainMismatchError,
    SampleValidationError,
    TermBudgetError,
)
from .fitting import SampleSet, fit_ridge, load_samples_csv, ridge_coefficients
from .kernels import (
    Gaussian1D,
    Gaussian2D,
    GraphonBox,
    Kernel,
    Sinc,
    SpherePoly,
    kernel_from_json,
)
from .nonlinearity import apply_eta, eta_frechet
from .signal import GridField, RkhsSignal, classic_convolve_grid, evaluate_grid
from .algnn import AlgNet, collect_params, forward, forward_trace, init_net, set_params
from .training import (
    CGResult,
    Direction,
    TrainConfig,
    adam_train,
    cg_solve_direction,
    conv_frechet,
    frechet_F1,
    frechet_F2,
    frechet_full,
    loss,
    loss_frechet,
    parametric_gradient,
    steepest_descent_train,
    wolfe_backtrack,
)

__version__ = "0.1.0"
