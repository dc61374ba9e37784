"""Numerical toolkit for rough differential equations, Lagrangian rough
transport, and 2D vortex dynamics under shared rough driving."""

__version__ = "0.1.0"

from .rough_core import (  # noqa: F401
    Control,
    TimeGrid,
    TwoParamFunction,
    check_superadditive,
    control_from_variation,
    increments_of_path,
    p_variation,
    sew,
)
from .rough_path import (  # noqa: F401
    NoiseSpec,
    RoughPath,
    canonical_lift,
    chen_defect,
    restrict,
    rough_distance,
    sample_noise,
    time_reverse,
    translate,
)
from .osgood import OsgoodModulus, bihari_bound, builtin_modulus, osgood_ode_envelope  # noqa: F401
