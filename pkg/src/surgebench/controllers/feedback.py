"""Conventional feedback controllers: decoupled PI rules, the inverse-based
design, discrete state-space realizations, anti-windup and back-initialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import pseudoinverse
from ..plant import (
    NOMINAL_Q_IN,
    NOMINAL_Q_WATER,
    Q_IN_BOUNDS,
    Q_WATER_BOUNDS,
    ControlInput,
)
from ..rational import Rational, RationalMatrix
from .base import Controller

# Conventional controllers cap q_i here to keep inflow equal to the outflow.
Q_IN_CAP = 750.0

NOMINAL_INPUTS = np.array([NOMINAL_Q_IN, NOMINAL_Q_WATER])

DEFAULT_TUNING_FACTOR = 0.05
DEFAULT_INVERSE_GAIN = 100.0


@dataclass(frozen=True)
class PiParameters:
    """Proportional gain and integral time of one PI loop."""

    kc: float
    tau_i: float

    @property
    def integral_gain(self) -> float:
        # Kc (1 + 1/(tau_i s)) = (Kc s + Kc/tau_i) / s; a pure integrator rule
        # with tau_i = 0 means no integral action.
        return self.kc / self.tau_i if self.tau_i > 0 else 0.0


def pi_from_rules(model_kind: str, k: float, t_r: float, tau: float | None = None) -> PiParameters:
    """PI tuning rules for first-order and integrating process models.

    first-order: Kc = 3 tau / (k T_R), tau_i = tau
    integrator:  Kc = 4.2 / (k T_R),  tau_i = 0.4 T_R
    """
    if k == 0:
        raise ValueError("pi_from_rules: process gain k must be nonzero")
    if t_r <= 0:
        raise ValueError("pi_from_rules: tuning factor T_R must be positive")
    if model_kind == "first-order":
        if tau is None:
            raise ValueError("first-order rule needs the time constant tau")
        return PiParameters(kc=3.0 * tau / (k * t_r), tau_i=tau)
    if model_kind == "integrator":
        return PiParameters(kc=4.2 / (k * t_r), tau_i=0.4 * t_r)
    raise ValueError(f"unknown model kind {model_kind!r}")


class LinearFeedbackController:
    """Discrete realization of a linear feedback law u = C_c x_c + D_c e.

    The continuous realization uses one integrator state per error channel
    (A_c = 0, B_c = I, C_c = K_i), so the ZOH discretization is exact:
    Phi_c = I, Gamma_c = dt * I. Saturation follows the plant-side convention
    for this process: a commanded q_i above ``Q_IN_CAP`` is replaced by
    (Q_IN_CAP, 0) and the whole Gamma_c is zeroed for that step. An ordinary
    box clamp freezes only the clamped channel's integrator row; freezing both
    rows on a one-sided water clamp lets the volume error wind into the q_i
    cap and deadlock the loop at zero net inflow.
    """

    def __init__(self, proportional: np.ndarray, integral: np.ndarray, dt: float):
        self.d_c = np.asarray(proportional, dtype=float)
        self.c_c = np.asarray(integral, dtype=float)
        if self.d_c.shape != (2, 2) or self.c_c.shape != (2, 2):
            raise ValueError("gain matrices must be 2x2")
        self.dt = dt
        self.phi_c = np.eye(2)
        self.gamma_c = dt * np.eye(2)
        self.c_pinv = pseudoinverse(self.c_c)
        self.x_c = np.zeros(2)

    def reset(self) -> None:
        self.x_c = np.zeros(2)

    def output(self, e: np.ndarray) -> np.ndarray:
        """Raw control deviation u(k) = C_c x_c(k) + D_c e(k)."""
        return self.c_c @ self.x_c + self.d_c @ e

    def saturate(self, u_dev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Apply the coupled q_i cap and the input box.

        Returns the absolute command and a per-channel freeze mask for the
        integrator update.
        """
        u_abs = u_dev + NOMINAL_INPUTS
        if u_abs[0] > Q_IN_CAP:
            return np.array([Q_IN_CAP, 0.0]), np.array([True, True])
        boxed = np.clip(u_abs, [Q_IN_BOUNDS[0], Q_WATER_BOUNDS[0]],
                        [Q_IN_BOUNDS[1], Q_WATER_BOUNDS[1]])
        return boxed, boxed != u_abs

    def compute_control(self, e: np.ndarray) -> ControlInput:
        """One full controller step: output, saturation, state advance."""
        u_abs, freeze = self.saturate(self.output(e))
        self.advance(e, freeze=freeze)
        return ControlInput(u_abs[0], u_abs[1])

    def advance(self, e: np.ndarray, freeze: np.ndarray | None = None) -> None:
        """x_c(k+1) = Phi_c x_c(k) + Gamma_c e(k), saturated rows held."""
        step = self.gamma_c @ e
        if freeze is not None:
            step = np.where(freeze, 0.0, step)
        self.x_c = self.phi_c @ self.x_c + step

    def back_initialize(self, u_prev_abs: np.ndarray, e_now: np.ndarray) -> None:
        """Set x_c so the next computed control equals the previously applied input.

        x_c = C_c^+ (u(k-1) - D_c e(k)); the minus sign is what the output
        equation requires for the round trip to be exact.
        """
        u_prev_dev = np.asarray(u_prev_abs, dtype=float) - NOMINAL_INPUTS
        self.x_c = self.c_pinv @ (u_prev_dev - self.d_c @ e_now)


def realize_pi_matrix(proportional: np.ndarray, integral: np.ndarray,
                      dt: float) -> LinearFeedbackController:
    """Canonical two-integrator realization of a PI gain matrix pair."""
    return LinearFeedbackController(proportional, integral, dt)


def local_pi_gains(t_r: float = DEFAULT_TUNING_FACTOR) -> tuple[np.ndarray, np.ndarray]:
    """Decoupled PI gain matrices from the tuning rules and the diagonal pairing.

    The volume loop sees the integrating element of the plant (unit gain), the
    density loop a first-order element with k = -0.04/75 and tau = 1/75.
    """
    volume = pi_from_rules("integrator", k=1.0, t_r=t_r)
    density = pi_from_rules("first-order", k=-0.04 / 75.0, t_r=t_r, tau=1.0 / 75.0)
    proportional = np.diag([volume.kc, density.kc])
    integral = np.diag([volume.integral_gain, density.integral_gain])
    return proportional, integral


def derive_inverse_controller(gp: RationalMatrix, k: float | None = None) -> RationalMatrix:
    """Inverse-based design (k/s) Gp^-1 achieving the loop shape (k/s) I.

    With k omitted, the gain is left symbolic by returning Gp^-1 / s; pass k
    to scale. Requires Gp invertible as a rational matrix.
    """
    integrator = Rational(np.array([1.0]), np.array([0.0, 1.0]))  # 1/s
    inv = gp.inverse()
    scaled = RationalMatrix([[(integrator * inv[i, j]).simplified()
                              for j in range(inv.cols)] for i in range(inv.rows)])
    if k is None:
        return scaled
    return RationalMatrix([[(k * scaled[i, j]).simplified()
                            for j in range(scaled.cols)] for i in range(scaled.rows)])


def modified_inverse_gains(k: float = DEFAULT_INVERSE_GAIN) -> tuple[np.ndarray, np.ndarray]:
    """Gain matrices of the inverse-based controller with integral action added.

    The plant inverse yields proportional volume-error terms (0.8, 0.2) and PI
    density-error terms 20(s+75)/s; integral action with gains (33.04, 33) is
    added to the proportional terms so input-gain uncertainty no longer leaves
    a steady-state volume error.
    """
    proportional = k * np.array([[0.8, 20.0], [0.2, -20.0]])
    integral = k * np.array([[33.04, 20.0 * 75.0], [33.0, -20.0 * 75.0]])
    return proportional, integral


class ConventionalController(Controller):
    """Linear feedback competitor with separate simulation and plant realizations."""

    def __init__(self, ident: int, label: str, proportional: np.ndarray,
                 integral: np.ndarray, dt: float):
        self.ident = ident
        self.label = label
        self._gains = (proportional, integral)
        self.dt = dt
        self.sim_law = LinearFeedbackController(proportional, integral, dt)
        self.plant_law = LinearFeedbackController(proportional, integral, dt)
        self._sim_pending: tuple[np.ndarray, bool] | None = None
        self._plant_pending: tuple[np.ndarray, bool] | None = None

    def reset(self) -> None:
        self.sim_law.reset()
        self.plant_law.reset()
        self._sim_pending = None
        self._plant_pending = None

    def _command(self, law: LinearFeedbackController, r, y) -> tuple[ControlInput, tuple]:
        e = np.asarray(r, dtype=float) - np.asarray(y, dtype=float)
        u_abs, freeze = law.saturate(law.output(e))
        return ControlInput(u_abs[0], u_abs[1]), (e, freeze)

    def sim_command(self, r, y) -> ControlInput:
        u, self._sim_pending = self._command(self.sim_law, r, y)
        return u

    def sim_commit(self, u_applied: ControlInput) -> None:
        if self._sim_pending is not None:
            e, freeze = self._sim_pending
            self.sim_law.advance(e, freeze=freeze)
            self._sim_pending = None

    def plant_command(self, r, y) -> ControlInput:
        u, self._plant_pending = self._command(self.plant_law, r, y)
        return u

    def plant_commit(self, u_applied: ControlInput) -> None:
        if self._plant_pending is not None:
            e, freeze = self._plant_pending
            self.plant_law.advance(e, freeze=freeze)
            self._plant_pending = None

    def activate(self, r, y, u_applied_prev: ControlInput) -> None:
        e_now = np.asarray(r, dtype=float) - np.asarray(y, dtype=float)
        self.plant_law.back_initialize(u_applied_prev.as_array(), e_now)
        self._plant_pending = None
