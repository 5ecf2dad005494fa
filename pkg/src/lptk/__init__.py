"""lp-norm regularized learning solved in the dual with tensor kernels."""

from .duality import Exponents, duality_map, lp_norm, prox_power, prox_power_vec
from .kernels import (
    FeatureOperator,
    GramSizeError,
    GramTensor,
    MultiplyCounter,
    TensorKernelSpec,
    UnsupportedArityError,
    build_gram,
    feature_dual_gradient,
    feature_map_poly2,
    kernel_eval,
    kernel_predict,
    poly2_feature_matrix,
    quartic_gradient,
    quartic_value,
    rkbs_norm,
)
from .losses import (
    DualSplit,
    LossSpec,
    conjugate_value,
    dual_split,
    loss_value,
    phi2_prox,
    xi_vector,
)
from .datasets import Dataset, SyntheticSpec, generate_sparse_regression
from .solvers import (
    CertificateError,
    DivergenceError,
    DualState,
    Solution,
    SolverConfig,
    SolverError,
    StagnationError,
    duality_gap,
    dual_objective,
    error_bound_diagnostic,
    kkt_residual,
    primal_fista,
    primal_gd_linesearch,
    primal_objective,
    recover_primal,
    ridge_closed_form,
    solve_dual_ls_q4,
    solve_dual_prox_grad,
)

__version__ = "0.1.0"
