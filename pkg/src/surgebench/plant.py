"""Nonlinear surge-tank model, its linearization, and disturbance profiles.

States are tank volume v (m^3) and tank/outlet density rho (t/m^3); inputs are
the product inflow q_i and water inflow q_w (m^3/h); the outflow q_o is a
scenario constant and the feed density rho_i (t/m^3) acts as the disturbance.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .numerics import discretize_zoh, rk4_step

# Nominal operating values and physical bounds (absolute units).
NOMINAL_VOLUME = 10.0
NOMINAL_DENSITY = 1.4
NOMINAL_Q_IN = 600.0
NOMINAL_Q_WATER = 150.0
NOMINAL_Q_OUT = 750.0
NOMINAL_RHO_IN = 1.5

VOLUME_BOUNDS = (3.0, 20.0)
DENSITY_BOUNDS = (1.0, 1.5)
Q_IN_BOUNDS = (300.0, 1200.0)
Q_WATER_BOUNDS = (0.0, 750.0)
RHO_IN_BOUNDS = (1.0, 2.0)

DEFAULT_PROFILE_SEED = 7


class SingularDynamicsError(ValueError):
    """Tank volume reached a non-physical value (v <= 0)."""


@dataclass(frozen=True)
class PlantState:
    """Tank volume (m^3) and density (t/m^3)."""

    v: float
    rho: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.rho])


@dataclass(frozen=True)
class ControlInput:
    """Product and water inflow rates (m^3/h), absolute units."""

    q_i: float
    q_w: float

    def as_array(self) -> np.ndarray:
        return np.array([self.q_i, self.q_w])


@dataclass(frozen=True)
class ActuatorUncertainty:
    """Multiplicative gain error per input channel, invisible to controllers."""

    qi_gain: float = 1.0
    qw_gain: float = 1.0

    def apply(self, u: ControlInput) -> ControlInput:
        return ControlInput(u.q_i * self.qi_gain, u.q_w * self.qw_gain)


@dataclass(frozen=True)
class OperatingPoint:
    state: PlantState
    inputs: ControlInput
    q_out: float = NOMINAL_Q_OUT
    rho_in: float = NOMINAL_RHO_IN


CANONICAL_OPERATING_POINT = OperatingPoint(
    state=PlantState(NOMINAL_VOLUME, NOMINAL_DENSITY),
    inputs=ControlInput(NOMINAL_Q_IN, NOMINAL_Q_WATER),
)


@dataclass(frozen=True)
class LinearModel:
    """Continuous LTI model (A, B, Gd, C) with an optional ZOH-discrete pair."""

    a: np.ndarray
    b: np.ndarray
    gd: np.ndarray
    c: np.ndarray
    dt: float | None = None
    phi: np.ndarray | None = None
    gamma: np.ndarray | None = None

    def discretize(self, dt: float) -> "LinearModel":
        phi, gamma = discretize_zoh(self.a, self.b, dt)
        return LinearModel(self.a, self.b, self.gd, self.c, dt=dt, phi=phi, gamma=gamma)


def dynamics(x: PlantState, u: ControlInput, q_out: float, rho_in: float) -> np.ndarray:
    """Time derivative (dv/dt, drho/dt) of the nonlinear mass-balance model."""
    if x.v <= 0:
        raise SingularDynamicsError(f"tank volume must be positive, got v={x.v}")
    dv = u.q_i + u.q_w - q_out
    drho = (rho_in * u.q_i + u.q_w - x.rho * (u.q_i + u.q_w)) / x.v
    return np.array([dv, drho])


def equilibrium_residual(op: OperatingPoint) -> np.ndarray:
    """Dynamics evaluated at the point; the zero vector iff an equilibrium."""
    return dynamics(op.state, op.inputs, op.q_out, op.rho_in)


def linearize(op: OperatingPoint, tol: float = 1e-9) -> LinearModel:
    """First-order Taylor model around an equilibrium operating point.

    The q_out channel is dropped (held constant); C is the identity because
    both states are measured directly. Raises if the point is not an
    equilibrium, carrying the residual in the message.
    """
    residual = equilibrium_residual(op)
    if np.linalg.norm(residual) >= tol:
        raise ValueError(
            f"linearize requires an equilibrium point; residual {residual.tolist()}"
        )
    v, rho = op.state.v, op.state.rho
    q_i, q_w = op.inputs.q_i, op.inputs.q_w
    rho_in = op.rho_in
    a = np.array([
        [0.0, 0.0],
        [-(rho_in * q_i + q_w - rho * (q_i + q_w)) / v**2, -(q_i + q_w) / v],
    ])
    b = np.array([
        [1.0, 1.0],
        [(rho_in - rho) / v, (1.0 - rho) / v],
    ])
    gd = np.array([[0.0], [q_i / v]])
    c = np.eye(2)
    return LinearModel(a, b, gd, c)


def step_plant(x: PlantState, u_commanded: ControlInput, q_out: float, rho_in: float,
               uncertainty: ActuatorUncertainty | None, dt: float) -> PlantState:
    """Advance the nonlinear model one RK4 step under ZOH inputs.

    Actuator uncertainty multiplies the commanded inputs before they reach the
    tank; callers (controllers, selector) never see the perturbed values.
    """
    u_actual = uncertainty.apply(u_commanded) if uncertainty is not None else u_commanded

    def field(vec: np.ndarray) -> np.ndarray:
        return dynamics(PlantState(vec[0], vec[1]), u_actual, q_out, rho_in)

    nxt = rk4_step(field, x.as_array(), dt)
    return PlantState(nxt[0], nxt[1])


@dataclass(frozen=True)
class DisturbanceProfile:
    """Piecewise-constant feed-density signal given as (time, value) step knots."""

    knots: tuple[tuple[float, float], ...]
    duration: float

    def __post_init__(self):
        if not self.knots:
            raise ValueError("DisturbanceProfile needs at least one knot")
        times = [t for t, _ in self.knots]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("knot times must be strictly increasing")
        lo, hi = RHO_IN_BOUNDS
        for _, value in self.knots:
            if not lo <= value <= hi:
                raise ValueError(f"rho_i knot {value} outside [{lo}, {hi}]")

    def value_at(self, t: float) -> float:
        """Zero-order hold of the step knots."""
        if t < 0 or t > self.duration:
            raise ValueError(f"t={t} outside profile duration [0, {self.duration}]")
        value = self.knots[0][1]
        for knot_t, knot_v in self.knots:
            if knot_t <= t:
                value = knot_v
            else:
                break
        return value

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("time_hours,rho_i\n")
        for t, value in self.knots:
            out.write(f"{t:.9g},{value:.9g}\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str, duration: float) -> "DisturbanceProfile":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not lines or lines[0].replace(" ", "") != "time_hours,rho_i":
            raise ValueError("profile CSV must start with header 'time_hours,rho_i'")
        knots = []
        for i, line in enumerate(lines[1:], start=2):
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"profile CSV line {i}: expected 'time,value', got {line!r}")
            knots.append((float(parts[0]), float(parts[1])))
        return cls(tuple(knots), duration)


def sample_disturbance(profile: DisturbanceProfile, t: float) -> float:
    return profile.value_at(t)


def canonical_profile(duration: float = 6.0, seed: int = DEFAULT_PROFILE_SEED) -> DisturbanceProfile:
    """Deterministic 6-hour feed-density profile used by the canonical scenario.

    Piecewise constant with steps every 0.2 to 0.5 h, values in [1.42, 1.74]
    outside a sub-setpoint dip over [2.6, 3.2] h whose minimum is exactly 1.35;
    the global maximum is forced to exactly 1.74 and the signal starts at the
    nominal 1.5. The dip is entered through a short graded ramp: an abrupt full
    water shutoff would slam the level loops into the coupled q_i cap.
    """
    dip_start, dip_end = 2.6, 3.2
    rng = np.random.default_rng(seed)
    knots: list[tuple[float, float]] = [(0.0, NOMINAL_RHO_IN)]
    t = 0.0
    while True:
        t += float(rng.uniform(0.2, 0.5))
        if t >= duration:
            break
        value = float(rng.uniform(1.42, 1.74))
        knots.append((round(t, 6), round(value, 4)))
    # Keep a clear window around the dip, then insert its knots: graded entry,
    # the profile minimum, and recovery at the window end.
    knots = [k for k in knots if not (dip_start - 0.25 <= k[0] < dip_end + 0.15)]
    knots.extend([
        (dip_start - 0.2, 1.47),
        (dip_start - 0.1, 1.43),
        (dip_start, 1.39),
        (round(dip_start + (dip_end - dip_start) / 3.0, 6), 1.35),
        (round(dip_start + 2.0 * (dip_end - dip_start) / 3.0, 6), 1.38),
        (dip_end, 1.47),
        (dip_end + 0.15, 1.52),
    ])
    knots.sort()
    # Force the documented global maximum on the largest drawn value.
    values = [v for _, v in knots]
    knots[values.index(max(values))] = (knots[values.index(max(values))][0], 1.74)
    return DisturbanceProfile(tuple(knots), duration)


def step_profile(step: float, duration: float, step_time: float = 0.1,
                 base: float = NOMINAL_RHO_IN) -> DisturbanceProfile:
    """Single step of the given size in rho_i at step_time (used by step studies)."""
    if step == 0.0:
        return DisturbanceProfile(((0.0, base),), duration)
    return DisturbanceProfile(((0.0, base), (step_time, base + step)), duration)
