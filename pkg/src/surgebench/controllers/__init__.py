"""Controller registry. Competitor ids follow the platform nomenclature:
0 = decoupled PI (local fallback), 1 = modified inverse, 2 = linear MPC,
3 = nonlinear MPC.
"""

from __future__ import annotations

from ..plant import CANONICAL_OPERATING_POINT, OperatingPoint, linearize
from .base import Controller
from .feedback import (
    ConventionalController,
    LinearFeedbackController,
    PiParameters,
    derive_inverse_controller,
    local_pi_gains,
    modified_inverse_gains,
    pi_from_rules,
    realize_pi_matrix,
)
from .mpc import (
    DisturbanceObserver,
    LinearPredictor,
    MpcConfig,
    MpcController,
    MpcSolverError,
    NonlinearPredictor,
    ObserverState,
    SolverSettings,
    mpc_solve,
)

LOCAL_FALLBACK_ID = 0

CONTROLLER_LABELS = {
    0: "pi-local",
    1: "modified-inverse",
    2: "linear-mpc",
    3: "nonlinear-mpc",
}


def build_controller(ident: int, dt: float,
                     op: OperatingPoint = CANONICAL_OPERATING_POINT,
                     solver_settings: SolverSettings | None = None) -> Controller:
    """Construct one competitor by registry id."""
    if ident not in CONTROLLER_LABELS:
        raise KeyError(f"unknown controller id {ident}; known ids {sorted(CONTROLLER_LABELS)}")
    label = CONTROLLER_LABELS[ident]
    if ident == 0:
        proportional, integral = local_pi_gains()
        return ConventionalController(0, label, proportional, integral, dt)
    if ident == 1:
        proportional, integral = modified_inverse_gains()
        return ConventionalController(1, label, proportional, integral, dt)
    model = linearize(op).discretize(dt)
    settings = solver_settings or SolverSettings()
    if ident == 2:
        cfg = MpcConfig(model_kind="linear")
        predictor = LinearPredictor(cfg, model)
    else:
        cfg = MpcConfig(model_kind="nonlinear")
        predictor = NonlinearPredictor(cfg, op, dt)
    return MpcController(ident, label, cfg, predictor, model, settings)


def build_registry(ids, dt: float, op: OperatingPoint = CANONICAL_OPERATING_POINT) -> dict[int, Controller]:
    """Controllers keyed by id, in ascending id order."""
    return {ident: build_controller(ident, dt, op) for ident in sorted(ids)}


__all__ = [
    "CONTROLLER_LABELS",
    "LOCAL_FALLBACK_ID",
    "Controller",
    "ConventionalController",
    "DisturbanceObserver",
    "LinearFeedbackController",
    "LinearPredictor",
    "MpcConfig",
    "MpcController",
    "MpcSolverError",
    "NonlinearPredictor",
    "ObserverState",
    "PiParameters",
    "SolverSettings",
    "build_controller",
    "build_registry",
    "derive_inverse_controller",
    "local_pi_gains",
    "modified_inverse_gains",
    "mpc_solve",
    "pi_from_rules",
    "realize_pi_matrix",
]
