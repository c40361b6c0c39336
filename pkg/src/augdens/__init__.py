"""Abel transforms, consistency conditions and inversion for spherical
two-integral distribution functions described by their augmented density."""
from .diagnostics import (
    AnisotropyProfile,
    ConditionReport,
    SlopeProfile,
    anisotropy_from_B,
    B_from_anisotropy,
    check_general_conditions,
    check_separable_conditions,
    slope_anisotropy_check,
    slope_profile,
)
from .expr import Expression, parse_expression
from .inversion import (
    RecoveredDF,
    anisotropy_from_moments,
    eddington_invert,
    forward_moment,
    roundtrip_residual,
)
from .models import (
    AugmentedDensityModel,
    DistributionFunction,
    EvaluationGrid,
    PotentialModel,
    SeparablePart,
    default_grid,
    kernel_K,
    make_plummer_pair,
    make_powerlaw_separable,
    power_df,
    power_df_density,
)
from .quadrature import (
    DEFAULT_SPEC,
    DivergentIntegral,
    QuadratureError,
    QuadratureSpec,
    abel_integral,
    diagonal_line_integral,
    triangle_integral,
)
from .transforms import (
    TransformField,
    compute_transform_field,
    line_identity_lhs,
    line_identity_rhs,
    rho_bar,
    rho_hat,
    rho_tilde,
)

__version__ = "0.1.0"
