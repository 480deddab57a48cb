"""Radial spiral-stretch homeomorphisms of the plane and checks of their rotation, distortion and Holder behaviour."""

from .construction import (
    MODES,
    ROTATION_ONLY,
    STRETCH_ROTATION,
    ConstraintViolation,
    GaugeSpec,
    SchedulePlan,
    check_feasibility,
    compose_schedule,
    distortion_lp_norm,
    distortion_lp_norm_mc,
    generate_schedule,
    plan_from_radii,
    series_report,
)
from .holder import ExponentFit, PairSampler, check_g_bounds, check_inverse_holder, fit_exponent
from .mapcore import (
    Annulus,
    BoundaryError,
    PiecewiseRadialMap,
    RegionAction,
    SpiralStretchBlock,
    block_eval,
    compose_blocks,
    identity_map,
)
from .modulus import (
    BallChain,
    PathFamilySpec,
    build_ball_chain,
    modulus_lower_from_winding,
    rho0_eval,
    verify_bound_chain,
    weighted_modulus_upper,
)
from .rotation import (
    TrackingError,
    continuous_arg,
    sharpness_check,
    theorem1_ratio,
    winding_count,
)

__version__ = "0.1.0"
