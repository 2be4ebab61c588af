"""surgebench: a desk-scale simulator in which competing process controllers
(decoupled PI, inverse-based, linear and nonlinear MPC) are continuously
evaluated on a surge-tank model by a supervisory selector that switches to the
best one with bumpless transfer, plus an input/output controllability toolkit.
"""

__version__ = "0.1.0"

from .plant import (  # noqa: F401
    CANONICAL_OPERATING_POINT,
    ActuatorUncertainty,
    ControlInput,
    DisturbanceProfile,
    LinearModel,
    OperatingPoint,
    PlantState,
    canonical_profile,
    dynamics,
    equilibrium_residual,
    linearize,
    sample_disturbance,
    step_plant,
)
