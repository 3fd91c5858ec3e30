"""Discrete increment calculus for Young and rough integration on time grids."""

from .brownian import (
    BrownianConfig,
    brownian_rough_path,
    correction_identity_check,
    grr_diagnostic,
    levy_area_ito,
    sample_bm,
    strat_from_ito,
    weierstrass_path,
)
from .controlled import (
    ChenError,
    ControlledPath,
    RoughPath2,
    VectorField,
    compose_smooth,
    controlled_norm,
    integral_against_driver,
    lift_from_cells,
    linear_field,
    linear_lift,
    polynomial_field,
    rough_integral,
    sine_field,
)
from .grid import GridPath, Increment2, TimeGrid, delta, holder_norm, holder_norm2, n_op
from .rde import RdeError, RdeProblem, solve_picard, solve_step
from .sewing import Germ, SewingError, dyadic_rate, sew
from .signature import TensorFunc, chen_mul, extend_level, mult_defect, multiplicativize
from .young import young_integral

__version__ = "0.1.0"
