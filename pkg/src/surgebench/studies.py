"""Single-controller closed-loop studies: disturbance step responses and
whole-scenario standalone runs used to compare against the platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controllers import Controller, build_controller
from .plant import (
    NOMINAL_DENSITY,
    NOMINAL_Q_IN,
    NOMINAL_Q_WATER,
    NOMINAL_VOLUME,
    ActuatorUncertainty,
    ControlInput,
    DisturbanceProfile,
    PlantState,
    step_plant,
    step_profile,
)
from .selector import InputConstraints, PlatformTrace, SelectorConfig

SETTLE_BAND_DENSITY = 0.005  # t/m^3 around the set-point


def run_closed_loop(controller: Controller, profile: DisturbanceProfile,
                    duration: float, cfg: SelectorConfig,
                    uncertainty: ActuatorUncertainty | None = None,
                    x0: PlantState | None = None, q_out: float = 750.0,
                    constraints: InputConstraints | None = None) -> PlatformTrace:
    """Run one controller alone on the (possibly uncertain) plant.

    Uses the controller's plant-side path with a bumpless activation at t = 0,
    and the same constraint layer as the platform.
    """
    constraints = constraints or InputConstraints()
    n_samples = int(round(duration / cfg.dt))
    if abs(duration / cfg.dt - n_samples) > 1e-9:
        raise ValueError(f"duration {duration} h is not a whole number of samples")
    x0 = x0 or PlantState(NOMINAL_VOLUME, NOMINAL_DENSITY)
    u_applied = ControlInput(NOMINAL_Q_IN, NOMINAL_Q_WATER)
    r = cfg.reference

    controller.reset()
    controller.activate(r, x0.as_array(), u_applied)

    trace = PlatformTrace(
        dt=cfg.dt,
        t=np.arange(n_samples) * cfg.dt,
        reference=np.tile(r, (n_samples, 1)),
        outputs=np.zeros((n_samples, 2)),
        u_commanded=np.zeros((n_samples, 2)),
        u_applied=np.zeros((n_samples, 2)),
        disturbance=np.zeros(n_samples),
        active_id=np.full(n_samples, controller.ident, dtype=int),
        w_error=cfg.w_error,
    )

    state = x0
    for k in range(n_samples):
        t = k * cfg.dt
        d = profile.value_at(t)
        y = state.as_array()
        controller.plant_observe(r, y)
        u_cmd = controller.plant_command(r, y)
        applied_arr, _ = constraints.enforce(u_cmd.as_array(), u_applied.as_array())
        u_applied = ControlInput(applied_arr[0], applied_arr[1])
        controller.plant_commit(u_applied)
        trace.outputs[k] = y
        trace.u_commanded[k] = u_cmd.as_array()
        trace.u_applied[k] = applied_arr
        trace.disturbance[k] = d
        state = step_plant(state, u_applied, q_out, d, uncertainty, cfg.dt)
    return trace


@dataclass(frozen=True)
class StepStudyResult:
    trace: PlatformTrace
    step_time_hours: float
    settling_time_hours: float | None  # density back inside +-0.005 of set-point
    ss_error_v: float
    ss_error_rho: float

    def summary_dict(self) -> dict:
        return {
            "step_time_hours": self.step_time_hours,
            "settling_time_hours": self.settling_time_hours,
            "ss_error_v": self.ss_error_v,
            "ss_error_rho": self.ss_error_rho,
        }

    def summary_text(self) -> str:
        info = self.summary_dict()
        lines = []
        for key in sorted(info):
            value = info[key]
            lines.append(f"{key} = {value:.9g}" if isinstance(value, float) else f"{key} = {value}")
        return "\n".join(lines) + "\n"


def settling_time(trace: PlatformTrace, step_time: float,
                  band: float = SETTLE_BAND_DENSITY) -> float | None:
    """Time after the step until the density stays inside the band for good."""
    ref_rho = trace.reference[:, 1]
    outside = np.abs(trace.outputs[:, 1] - ref_rho) > band
    after = trace.t >= step_time
    bad = np.flatnonzero(outside & after)
    if len(bad) == 0:
        return 0.0
    last_bad_t = trace.t[bad[-1]]
    if bad[-1] == len(trace.t) - 1:
        return None  # never settled within the run
    return float(last_bad_t + trace.dt - step_time)


def run_step_study(controller_id: int, step: float, qw_gain: float = 1.0,
                   qi_gain: float = 1.0, duration: float = 1.0,
                   dt: float = 0.002, step_time: float = 0.1) -> StepStudyResult:
    """Closed-loop response of one controller to a feed-density step.

    The plant carries the requested input gain uncertainty; steady-state
    errors are means over the final tenth of the run.
    """
    controller = build_controller(controller_id, dt)
    cfg = SelectorConfig(dt=dt)
    profile = step_profile(step, duration, step_time)
    uncertainty = ActuatorUncertainty(qi_gain=qi_gain, qw_gain=qw_gain)
    trace = run_closed_loop(controller, profile, duration, cfg, uncertainty)
    tail = max(1, len(trace.t) // 10)
    ss_err = trace.reference[-tail:] - trace.outputs[-tail:]
    return StepStudyResult(
        trace=trace,
        step_time_hours=step_time,
        settling_time_hours=settling_time(trace, step_time),
        ss_error_v=float(ss_err[:, 0].mean()),
        ss_error_rho=float(ss_err[:, 1].mean()),
    )
