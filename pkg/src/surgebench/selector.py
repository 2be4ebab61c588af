"""Supervisory selector: simulates every registered controller in closed loop
on the plant model over each evaluation horizon, scores them, switches to the
best with bumpless transfer, enforces plant-side constraints, and falls back
to the local controller on faults.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .controllers import LOCAL_FALLBACK_ID, Controller
from .plant import (
    NOMINAL_DENSITY,
    NOMINAL_Q_IN,
    NOMINAL_Q_WATER,
    NOMINAL_VOLUME,
    Q_IN_BOUNDS,
    Q_WATER_BOUNDS,
    ActuatorUncertainty,
    ControlInput,
    DisturbanceProfile,
    PlantState,
    step_plant,
)

DEFAULT_RATE_LIMIT = 100.0


class SwitchingConfigError(ValueError):
    """Selector configuration violates the switching stability guard."""


@dataclass(frozen=True)
class SelectorConfig:
    """Evaluation horizon, index weights, and the switching stability guard data."""

    dt: float = 0.002
    horizon_hours: float = 0.5
    bandwidth: float = 100.0  # rad/hour, minimum closed-loop bandwidth
    w_error: np.ndarray = field(default_factory=lambda: np.array([1e-3, 1.0]))
    w_move: np.ndarray = field(default_factory=lambda: np.array([1e-6, 1e-6]))
    index_kind: str = "error"  # "error" or "error+move"
    reference: np.ndarray = field(default_factory=lambda: np.array([NOMINAL_VOLUME, NOMINAL_DENSITY]))

    @property
    def horizon_samples(self) -> int:
        return int(round(self.horizon_hours / self.dt))


def validate_switching_config(cfg: SelectorConfig) -> None:
    """Stability guard: sampling vs bandwidth, horizon vs slowest loop dynamics.

    Requires 0.2 <= bandwidth * dt <= 0.6 and an evaluation horizon of at
    least ten closed-loop time constants (10 / bandwidth). Raises
    SwitchingConfigError with the offending numbers.
    """
    product = cfg.bandwidth * cfg.dt
    if not 0.2 <= product <= 0.6:
        raise SwitchingConfigError(
            f"bandwidth*dt = {product:g} outside the sampling guideline [0.2, 0.6]")
    slow = 10.0 / cfg.bandwidth
    if cfg.horizon_hours < slow:
        raise SwitchingConfigError(
            f"evaluation horizon {cfg.horizon_hours:g} h is shorter than ten "
            f"closed-loop time constants ({slow:g} h); switching this fast "
            "voids the stability guarantee")
    n = cfg.horizon_hours / cfg.dt
    if abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise SwitchingConfigError(
            f"evaluation horizon {cfg.horizon_hours:g} h is not a whole number "
            f"of samples at dt = {cfg.dt:g} h")
    if cfg.index_kind not in ("error", "error+move"):
        raise SwitchingConfigError(f"unknown index kind {cfg.index_kind!r}")


@dataclass(frozen=True)
class InputConstraints:
    """Plant-side manipulated-variable box and per-sample rate limit."""

    u_min: np.ndarray = field(default_factory=lambda: np.array([Q_IN_BOUNDS[0], Q_WATER_BOUNDS[0]]))
    u_max: np.ndarray = field(default_factory=lambda: np.array([Q_IN_BOUNDS[1], Q_WATER_BOUNDS[1]]))
    rate_limit: float = DEFAULT_RATE_LIMIT

    def enforce(self, u_cmd: np.ndarray, u_prev: np.ndarray) -> tuple[np.ndarray, bool]:
        """Clamp to the box, then clamp |du| per channel; report whether clamped."""
        boxed = np.clip(u_cmd, self.u_min, self.u_max)
        delta = np.clip(boxed - u_prev, -self.rate_limit, self.rate_limit)
        applied = u_prev + delta
        clamped = bool(np.max(np.abs(applied - u_cmd)) > 1e-9)
        return applied, clamped


def enforce_constraints(u_cmd: ControlInput, u_prev: ControlInput,
                        constraints: InputConstraints | None = None) -> tuple[ControlInput, bool]:
    constraints = constraints or InputConstraints()
    applied, clamped = constraints.enforce(u_cmd.as_array(), u_prev.as_array())
    return ControlInput(applied[0], applied[1]), clamped


def performance_index(r_seq: np.ndarray, y_seq: np.ndarray, w_error: np.ndarray,
                      u_seq: np.ndarray | None = None, w_move: np.ndarray | None = None,
                      kind: str = "error", u_prev: np.ndarray | None = None) -> float:
    """Weighted squared tracking error over one horizon, optionally plus moves.

    J = sum (r - y)' W_e (r - y) [+ sum du' W_u du]. Move differences are
    taken within u_seq, seeded with u_prev when given.
    """
    r_seq = np.atleast_2d(np.asarray(r_seq, dtype=float))
    y_seq = np.atleast_2d(np.asarray(y_seq, dtype=float))
    if r_seq.shape != y_seq.shape:
        raise ValueError(f"sequence shape mismatch: r {r_seq.shape} vs y {y_seq.shape}")
    err = r_seq - y_seq
    value = float(np.einsum("jc,c,jc->", err, np.asarray(w_error, dtype=float), err))
    if kind == "error+move":
        if u_seq is None or w_move is None:
            raise ValueError("error+move index needs the input sequence and W_u")
        u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
        if len(u_seq) != len(y_seq):
            raise ValueError("input sequence length mismatch")
        if u_prev is not None:
            moves = np.diff(np.vstack([np.asarray(u_prev, dtype=float), u_seq]), axis=0)
        else:
            moves = np.diff(u_seq, axis=0)
        value += float(np.einsum("jc,c,jc->", moves, np.asarray(w_move, dtype=float), moves))
    return value


@dataclass
class EvaluationRecord:
    controller_id: int
    j_value: float
    violated: bool
    horizon_index: int


@dataclass
class SwitchEvent:
    t_hours: float
    from_id: int
    to_id: int
    reason: str  # "selection" or "fault"


def select(records: list[EvaluationRecord], incumbent: int) -> int:
    """Argmin J over unflagged records; exact ties keep the incumbent.

    With every record flagged the local fallback id is returned.
    """
    eligible = [rec for rec in records if not rec.violated]
    if not eligible:
        return LOCAL_FALLBACK_ID
    best = min(rec.j_value for rec in eligible)
    winners = [rec.controller_id for rec in eligible if rec.j_value == best]
    if incumbent in winners:
        return incumbent
    return min(winners)


@dataclass
class PlatformTrace:
    """Per-sample record of the platform run plus per-horizon evaluations."""

    dt: float
    t: np.ndarray
    reference: np.ndarray
    outputs: np.ndarray
    u_commanded: np.ndarray
    u_applied: np.ndarray
    disturbance: np.ndarray
    active_id: np.ndarray
    horizon_records: list[list[EvaluationRecord]] = field(default_factory=list)
    horizon_selected: list[int] = field(default_factory=list)
    horizon_bounds: list[tuple[float, float]] = field(default_factory=list)
    switch_events: list[SwitchEvent] = field(default_factory=list)
    w_error: np.ndarray = field(default_factory=lambda: np.array([1e-3, 1.0]))

    def sse(self) -> tuple[float, float, float]:
        """Whole-run SSE per output and the weighted total."""
        err = self.reference - self.outputs
        sse_v = float(np.sum(err[:, 0] ** 2))
        sse_rho = float(np.sum(err[:, 1] ** 2))
        total = float(self.w_error[0] * sse_v + self.w_error[1] * sse_rho)
        return sse_v, sse_rho, total

    def max_input_change(self) -> tuple[float, float]:
        du = np.abs(np.diff(self.u_applied, axis=0))
        if len(du) == 0:
            return 0.0, 0.0
        return float(du[:, 0].max()), float(du[:, 1].max())

    def to_trace_csv(self) -> str:
        out = io.StringIO()
        out.write("t_hours,r_v,r_rho,y_v,y_rho,u_qi_cmd,u_qw_cmd,"
                  "u_qi_applied,u_qw_applied,rho_i,active_id\n")
        for k in range(len(self.t)):
            row = [self.t[k], self.reference[k, 0], self.reference[k, 1],
                   self.outputs[k, 0], self.outputs[k, 1],
                   self.u_commanded[k, 0], self.u_commanded[k, 1],
                   self.u_applied[k, 0], self.u_applied[k, 1],
                   self.disturbance[k]]
            out.write(",".join(f"{x:.9g}" for x in row))
            out.write(f",{int(self.active_id[k])}\n")
        return out.getvalue()

    def to_horizon_csv(self) -> str:
        ids = sorted({rec.controller_id for recs in self.horizon_records for rec in recs})
        out = io.StringIO()
        header = ["horizon", "t_start_hours", "t_end_hours"]
        header += [f"J_{i}" for i in ids]
        header += ["excluded_ids", "selected_id"]
        out.write(",".join(header) + "\n")
        for h, records in enumerate(self.horizon_records):
            by_id = {rec.controller_id: rec for rec in records}
            t0, t1 = self.horizon_bounds[h]
            cells = [str(h), f"{t0:.9g}", f"{t1:.9g}"]
            cells += [f"{by_id[i].j_value:.9g}" if i in by_id else "" for i in ids]
            excluded = ";".join(str(i) for i in ids if i in by_id and by_id[i].violated)
            cells.append(excluded)
            cells.append(str(self.horizon_selected[h]))
            out.write(",".join(cells) + "\n")
        return out.getvalue()

    def summary_dict(self) -> dict:
        sse_v, sse_rho, total = self.sse()
        max_qi, max_qw = self.max_input_change()
        return {
            "samples": int(len(self.t)),
            "horizons": len(self.horizon_records),
            "sse_v": sse_v,
            "sse_rho": sse_rho,
            "sse_total_weighted": total,
            "max_du_qi": max_qi,
            "max_du_qw": max_qw,
            "switch_count": len(self.switch_events),
            "final_active_id": int(self.active_id[-1]) if len(self.active_id) else LOCAL_FALLBACK_ID,
        }

    def summary_text(self) -> str:
        info = self.summary_dict()
        lines = [f"{key} = {info[key]:.9g}" if isinstance(info[key], float)
                 else f"{key} = {info[key]}" for key in sorted(info)]
        return "\n".join(lines) + "\n"


@dataclass
class _SimLoop:
    """One controller's private closed loop on the uncertainty-free model."""

    controller: Controller
    state: PlantState
    u_prev: ControlInput
    outputs: list[np.ndarray] = field(default_factory=list)
    inputs: list[np.ndarray] = field(default_factory=list)
    u_before_window: np.ndarray | None = None
    violated: bool = False

    def start_window(self) -> None:
        self.outputs = []
        self.inputs = []
        self.u_before_window = self.u_prev.as_array()
        self.violated = False


def evaluate_horizon(loops: list[_SimLoop], cfg: SelectorConfig,
                     profile: DisturbanceProfile, q_out: float,
                     sample_range: range, horizon_index: int,
                     constraints: InputConstraints) -> list[EvaluationRecord]:
    """Advance every controller's simulated loop across one horizon window.

    Each loop runs on the nonlinear model without actuator uncertainty, driven
    by the actual reference and measured disturbance. Simulation states persist
    across horizons. Any command that has to be clamped (box or rate) flags the
    controller for exclusion from this horizon's selection; a controller step
    failure flags it as well without disturbing the other loops.
    """
    for loop in loops:
        loop.start_window()
    r = cfg.reference
    for k in sample_range:
        t = k * cfg.dt
        d = profile.value_at(t)
        for loop in loops:
            y = loop.state.as_array()
            loop.outputs.append(y)
            try:
                u_cmd = loop.controller.sim_command(r, y)
                applied_arr, clamped = constraints.enforce(u_cmd.as_array(),
                                                           loop.u_prev.as_array())
                if clamped:
                    loop.violated = True
                u_applied = ControlInput(applied_arr[0], applied_arr[1])
                loop.controller.sim_commit(u_applied)
                loop.state = step_plant(loop.state, u_applied, q_out, d, None, cfg.dt)
                loop.u_prev = u_applied
                loop.inputs.append(applied_arr)
            except Exception:
                loop.violated = True
                loop.inputs.append(loop.u_prev.as_array())
    records = []
    for loop in loops:
        j_value = performance_index(
            np.tile(r, (len(loop.outputs), 1)),
            np.array(loop.outputs),
            cfg.w_error,
            u_seq=np.array(loop.inputs),
            w_move=cfg.w_move,
            kind=cfg.index_kind,
            u_prev=loop.u_before_window,
        )
        records.append(EvaluationRecord(loop.controller.ident, j_value,
                                        loop.violated, horizon_index))
    return records


def run_platform(controllers: dict[int, Controller], profile: DisturbanceProfile,
                 cfg: SelectorConfig, duration: float,
                 uncertainty: ActuatorUncertainty | None = None,
                 faults: list[tuple[float, float]] | None = None,
                 x0: PlantState | None = None, q_out: float = 750.0,
                 u0: ControlInput | None = None,
                 constraints: InputConstraints | None = None) -> PlatformTrace:
    """Run the full platform: plant loop plus per-horizon evaluation and switching.

    Control starts on the local fallback controller. At every horizon boundary
    the selector picks the unflagged controller with the lowest index and hands
    over bumplessly; a fault interval forces an immediate hand-over to the
    local controller and suppresses selection until it clears.
    """
    validate_switching_config(cfg)
    if LOCAL_FALLBACK_ID not in controllers:
        raise ValueError("the local fallback controller (id 0) must be registered")
    if abs(duration / cfg.dt - round(duration / cfg.dt)) > 1e-9:
        raise ValueError(f"duration {duration} h is not a whole number of samples")
    faults = sorted(faults or [])
    constraints = constraints or InputConstraints()
    n_samples = int(round(duration / cfg.dt))
    ne = cfg.horizon_samples
    x0 = x0 or PlantState(NOMINAL_VOLUME, NOMINAL_DENSITY)
    u_applied = u0 or ControlInput(NOMINAL_Q_IN, NOMINAL_Q_WATER)

    def in_fault(t: float) -> bool:
        return any(t0 <= t < t1 for t0, t1 in faults)

    ordered = [controllers[i] for i in sorted(controllers)]
    for ctrl in ordered:
        ctrl.reset()
    loops = [_SimLoop(ctrl, x0, u_applied) for ctrl in ordered]

    trace = PlatformTrace(
        dt=cfg.dt,
        t=np.arange(n_samples) * cfg.dt,
        reference=np.tile(cfg.reference, (n_samples, 1)),
        outputs=np.zeros((n_samples, 2)),
        u_commanded=np.zeros((n_samples, 2)),
        u_applied=np.zeros((n_samples, 2)),
        disturbance=np.zeros(n_samples),
        active_id=np.zeros(n_samples, dtype=int),
        w_error=cfg.w_error,
    )

    state = x0
    active = LOCAL_FALLBACK_ID
    r = cfg.reference
    for start in range(0, n_samples, ne):
        window = range(start, min(start + ne, n_samples))
        # Plant pass over the window (active controller, faults, constraints).
        for k in window:
            t = k * cfg.dt
            d = profile.value_at(t)
            y = state.as_array()
            if in_fault(t) and active != LOCAL_FALLBACK_ID:
                controllers[LOCAL_FALLBACK_ID].activate(r, y, u_applied)
                trace.switch_events.append(SwitchEvent(t, active, LOCAL_FALLBACK_ID, "fault"))
                active = LOCAL_FALLBACK_ID
            for ctrl in ordered:
                ctrl.plant_observe(r, y)
            u_cmd = controllers[active].plant_command(r, y)
            applied_arr, _ = constraints.enforce(u_cmd.as_array(), u_applied.as_array())
            u_applied = ControlInput(applied_arr[0], applied_arr[1])
            for ctrl in ordered:
                ctrl.plant_commit(u_applied)
            trace.outputs[k] = y
            trace.u_commanded[k] = u_cmd.as_array()
            trace.u_applied[k] = applied_arr
            trace.disturbance[k] = d
            trace.active_id[k] = active
            state = step_plant(state, u_applied, q_out, d, uncertainty, cfg.dt)
        # Evaluation pass over the same window, then selection at the boundary.
        horizon_index = start // ne
        records = evaluate_horizon(loops, cfg, profile, q_out, window,
                                   horizon_index, constraints)
        trace.horizon_records.append(records)
        trace.horizon_bounds.append((window.start * cfg.dt, (window.stop) * cfg.dt))
        chosen = select(records, incumbent=active)
        trace.horizon_selected.append(chosen)
        boundary_t = window.stop * cfg.dt
        if window.stop < n_samples and not in_fault(boundary_t):
            if chosen != active:
                controllers[chosen].activate(r, state.as_array(), u_applied)
                trace.switch_events.append(SwitchEvent(boundary_t, active, chosen, "selection"))
                active = chosen
    return trace
