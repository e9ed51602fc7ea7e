"""Numerical experiments on fine properties of Sobolev functions.

Precise representatives and L_p-points, refined gradients, discrete
p-capacity, Hausdorff covering estimates, difference quotients, L_p-approximate
differentials and Taylor remainders, all on uniform lattices.
"""

from ._jit import backend
from .capacity import CapacityOptions, CondenserProblem, cap_null_classify, p_capacity
from .convergence import ConvergenceReport, Trend
from .corpus import get as get_function
from .differentiability import (
    FormalDifferential,
    density_test,
    difference_quotient,
    diffquot_study,
    diffquot_w1p_error,
    lp_approx_differential,
)
from .errors import (
    DomainError,
    NumericError,
    PreconditionError,
    ResolutionError,
    SobolevLabError,
    UnknownFunctionError,
)
from .grid import (
    AbsDev,
    Ball,
    Box,
    Grid,
    GridFunction,
    NodeMask,
    VectorField,
    ball_average,
    gradient_fd,
    lp_norm,
    sample,
    wkp_norm,
)
from .hausdorff import alpha, frostman_consistency, hausdorff_upper
from .mollify import kernel_constant, mollify
from .representative import (
    LpVerdict,
    RadiusSchedule,
    classify_lp_point,
    classify_refined_gradient,
    lp_deviation,
    precise_rep,
)
from .taylor import integral_remainder, multiindex_eval, remainder, remainder_study, taylor_data

__version__ = "0.1.0"
