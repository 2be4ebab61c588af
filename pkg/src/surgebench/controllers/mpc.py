"""Model predictive competitors: quadratic cost with soft output constraints,
input-disturbance observer for offset-free tracking, and dual observers for
bumpless hand-over. One controller runs linear predictions, the other rolls
out the full nonlinear tank model.

All MPC arithmetic is in deviation variables around the nominal operating
point; conversion to absolute flow rates happens at the controller boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from ..numerics import kalman_gain
from ..plant import (
    DENSITY_BOUNDS,
    NOMINAL_DENSITY,
    NOMINAL_Q_IN,
    NOMINAL_Q_WATER,
    NOMINAL_RHO_IN,
    NOMINAL_VOLUME,
    Q_IN_BOUNDS,
    Q_WATER_BOUNDS,
    VOLUME_BOUNDS,
    ControlInput,
    LinearModel,
    OperatingPoint,
)
from .base import Controller

NOMINAL_INPUTS = np.array([NOMINAL_Q_IN, NOMINAL_Q_WATER])
NOMINAL_OUTPUTS = np.array([NOMINAL_VOLUME, NOMINAL_DENSITY])


class MpcSolverError(RuntimeError):
    """Optimizer failed to converge; callers fall back to the previous input."""


@dataclass(frozen=True)
class MpcConfig:
    """Horizons, weights and constraint data of one MPC instance.

    Bounds are in deviation units around the nominal inputs/outputs. ``n_blk``
    is the number of samples each computed move is held during predictions.
    """

    model_kind: str = "linear"
    n_pred: int = 50
    n_ctl: int = 5
    n_blk: int = 1
    q_weights: np.ndarray = field(default_factory=lambda: np.array([1e-3, 1.0]))
    r_weights: np.ndarray = field(default_factory=lambda: np.array([0.5e-7, 0.5e-7]))
    slack_weights: np.ndarray = field(default_factory=lambda: np.array([1e7, 1e7]))
    u_min: np.ndarray = field(
        default_factory=lambda: np.array([Q_IN_BOUNDS[0], Q_WATER_BOUNDS[0]]) - NOMINAL_INPUTS)
    u_max: np.ndarray = field(
        default_factory=lambda: np.array([Q_IN_BOUNDS[1], Q_WATER_BOUNDS[1]]) - NOMINAL_INPUTS)
    y_min: np.ndarray = field(
        default_factory=lambda: np.array([VOLUME_BOUNDS[0], DENSITY_BOUNDS[0]]) - NOMINAL_OUTPUTS)
    y_max: np.ndarray = field(
        default_factory=lambda: np.array([VOLUME_BOUNDS[1], DENSITY_BOUNDS[1]]) - NOMINAL_OUTPUTS)
    du_limit: float | None = 100.0

    def __post_init__(self):
        if self.n_pred < self.n_ctl * self.n_blk:
            raise ValueError("require n_pred >= n_ctl * n_blk")
        if np.any(self.q_weights < 0) or np.any(self.r_weights < 0) or np.any(self.slack_weights < 0):
            raise ValueError("weights must be nonnegative")

    def step_input_index(self, j: int) -> int:
        """Decision block active at prediction step j (terminal move held)."""
        return min(j // self.n_blk, self.n_ctl - 1)


@dataclass(frozen=True)
class SolverSettings:
    max_iter: int = 120
    ftol: float = 1e-12
    gtol: float = 1e-10


@dataclass
class ObserverState:
    """Corrected estimate: plant-state deviation and input-disturbance estimates."""

    x_hat: np.ndarray
    v_hat: np.ndarray


class DisturbanceObserver:
    """Steady-gain observer on the input-disturbance augmented discrete model.

    The plant states are augmented with one integrating disturbance state per
    input; process noise drives only those states, so constant unmeasured
    disturbances (and input-gain mismatch) are absorbed into v_hat, which the
    MPC adds to its predicted inputs. That is what provides integral action.
    """

    def __init__(self, model: LinearModel, qw: np.ndarray | None = None,
                 rn: np.ndarray | None = None):
        if model.phi is None or model.gamma is None:
            raise ValueError("observer needs a discretized model")
        nx = model.phi.shape[0]
        nu = model.gamma.shape[1]
        self.nx, self.nu = nx, nu
        self.phi_aug = np.block([
            [model.phi, model.gamma],
            [np.zeros((nu, nx)), np.eye(nu)],
        ])
        self.gamma_aug = np.vstack([model.gamma, np.zeros((nu, nu))])
        self.c_aug = np.hstack([model.c, np.zeros((nx, nu))])
        qw = np.eye(nu) if qw is None else np.asarray(qw, dtype=float)
        rn = 1e-5 * np.eye(nx) if rn is None else np.asarray(rn, dtype=float)
        noise_in = np.vstack([np.zeros((nx, nu)), np.eye(nu)])
        self.gain = kalman_gain(self.phi_aug, self.c_aug, noise_in @ qw @ noise_in.T, rn)
        self.x_star = np.zeros(nx + nu)
        self._corrected = np.zeros(nx + nu)

    def reset(self) -> None:
        self.x_star = np.zeros(self.nx + self.nu)
        self._corrected = np.zeros(self.nx + self.nu)

    def correct(self, y_dev: np.ndarray) -> ObserverState:
        """Measurement update against the predicted estimate."""
        innovation = np.asarray(y_dev, dtype=float) - self.c_aug @ self.x_star
        self._corrected = self.x_star + self.gain @ innovation
        return ObserverState(self._corrected[:self.nx].copy(),
                             self._corrected[self.nx:].copy())

    def predict(self, u_dev: np.ndarray) -> None:
        """Time update with the input that was actually applied."""
        self.x_star = self.phi_aug @ self._corrected + self.gamma_aug @ np.asarray(u_dev, dtype=float)

    def update(self, y_dev: np.ndarray, u_dev: np.ndarray) -> ObserverState:
        """Corrector followed by predictor (one full sample)."""
        estimate = self.correct(y_dev)
        self.predict(u_dev)
        return estimate

    def closed_loop_matrix(self) -> np.ndarray:
        return (np.eye(self.nx + self.nu) - self.gain @ self.c_aug) @ self.phi_aug


def _move_sequence(u_flat: np.ndarray, u_prev: np.ndarray, n_ctl: int) -> np.ndarray:
    moves = u_flat.reshape(n_ctl, 2).copy()
    moves[1:] -= moves[:-1]
    moves[0] -= u_prev
    return moves


def _slack_from_outputs(cfg: MpcConfig, y: np.ndarray) -> np.ndarray:
    """Optimal single slack per output: the largest violation over the horizon."""
    low = (cfg.y_min - y).max(axis=0)
    high = (y - cfg.y_max).max(axis=0)
    return np.maximum(0.0, np.maximum(low, high))


class LinearPredictor:
    """Condensed prediction matrices for the linear model (analytic gradient)."""

    def __init__(self, cfg: MpcConfig, model: LinearModel):
        if model.phi is None or model.gamma is None:
            raise ValueError("LinearPredictor needs a discretized model")
        self.cfg = cfg
        phi, gamma = model.phi, model.gamma
        n_pred, n_ctl = cfg.n_pred, cfg.n_ctl
        powers = [np.eye(2)]
        for _ in range(n_pred):
            powers.append(phi @ powers[-1])
        self.free = np.vstack([powers[j + 1] for j in range(n_pred)])          # (2Np, 2)
        cum = np.zeros((2, 2))
        rows = []
        for j in range(n_pred):
            cum = phi @ cum + gamma
            rows.append(cum)
        self.dist_map = np.vstack(rows)                                        # (2Np, 2)
        self.input_map = np.zeros((2 * n_pred, 2 * n_ctl))                     # (2Np, 2Nc)
        for j in range(n_pred):
            for m in range(j + 1):
                block = cfg.step_input_index(m)
                self.input_map[2 * j:2 * j + 2, 2 * block:2 * block + 2] += \
                    powers[j - m] @ gamma
        diff = np.eye(2 * n_ctl)
        diff[2:, :-2] -= np.eye(2 * (n_ctl - 1))
        self.diff = diff
        self.q_stack = np.tile(cfg.q_weights, n_pred)
        self.r_stack = np.tile(cfg.r_weights, n_ctl)

    def outputs(self, x0: np.ndarray, v_hat: np.ndarray, u_flat: np.ndarray) -> np.ndarray:
        stacked = self.free @ x0 + self.dist_map @ v_hat + self.input_map @ u_flat
        return stacked.reshape(self.cfg.n_pred, 2)

    def objective(self, x0, v_hat, r_dev, u_prev):
        cfg = self.cfg
        base = self.free @ x0 + self.dist_map @ v_hat
        r_stack = np.tile(r_dev, cfg.n_pred)
        prev_pad = np.zeros(2 * cfg.n_ctl)
        prev_pad[:2] = u_prev

        def fg(u_flat: np.ndarray):
            y_stack = base + self.input_map @ u_flat
            err = r_stack - y_stack
            moves = self.diff @ u_flat - prev_pad
            f = err @ (self.q_stack * err) + moves @ (self.r_stack * moves)
            grad = -2.0 * (self.input_map.T @ (self.q_stack * err)) \
                + 2.0 * (self.diff.T @ (self.r_stack * moves))
            y = y_stack.reshape(cfg.n_pred, 2)
            for c in range(2):
                low = cfg.y_min[c] - y[:, c]
                high = y[:, c] - cfg.y_max[c]
                j_low, j_high = int(np.argmax(low)), int(np.argmax(high))
                delta = max(0.0, low[j_low], high[j_high])
                if delta > 0.0:
                    f += cfg.slack_weights[c] * delta * delta
                    if high[j_high] >= low[j_low]:
                        grad += 2.0 * cfg.slack_weights[c] * delta * self.input_map[2 * j_high + c]
                    else:
                        grad -= 2.0 * cfg.slack_weights[c] * delta * self.input_map[2 * j_low + c]
            return f, grad

        return fg

    def batch_objective(self, x0, v_hat, r_dev, u_prev, u_batch: np.ndarray) -> np.ndarray:
        """Objective on many candidate input sequences at once (oracle support)."""
        cfg = self.cfg
        y = (self.free @ x0 + self.dist_map @ v_hat)[None, :] + u_batch @ self.input_map.T
        y = y.reshape(len(u_batch), cfg.n_pred, 2)
        return _batched_cost(cfg, y, u_batch, u_prev, r_dev)


def _batched_cost(cfg: MpcConfig, y: np.ndarray, u_batch: np.ndarray,
                  u_prev: np.ndarray, r_dev: np.ndarray) -> np.ndarray:
    err = r_dev[None, None, :] - y
    track = np.einsum("bjc,c,bjc->b", err, cfg.q_weights, err)
    moves = u_batch.reshape(len(u_batch), cfg.n_ctl, 2).copy()
    moves[:, 1:, :] -= moves[:, :-1, :].copy()
    moves[:, 0, :] -= u_prev
    move = np.einsum("bjc,c,bjc->b", moves, cfg.r_weights, moves)
    low = (cfg.y_min[None, None, :] - y).max(axis=1)
    high = (y - cfg.y_max[None, None, :]).max(axis=1)
    delta = np.maximum(0.0, np.maximum(low, high))
    return track + move + (delta * delta) @ cfg.slack_weights


class NonlinearPredictor:
    """RK4 rollout of the nonlinear tank model; central-difference gradients."""

    def __init__(self, cfg: MpcConfig, op: OperatingPoint, dt: float):
        self.cfg = cfg
        self.op = op
        self.dt = dt
        self.fd_step = 1e-6

    def rollout(self, x0_dev: np.ndarray, v_hat: np.ndarray, u_batch: np.ndarray) -> np.ndarray:
        """Predicted output deviations (batch, n_pred, 2) for flat input rows.

        Classical RK4 under zero-order-hold inputs. The volume dynamics have no
        state feedback and each density RK4 step is affine in the density, so
        the per-step update rho <- gain*rho + offset is precomputed vectorized
        over the horizon and the only sequential work is a scalar recursion.
        """
        cfg = self.cfg
        dt = self.dt
        batch = len(u_batch)
        idx = np.minimum(np.arange(cfg.n_pred) // cfg.n_blk, cfg.n_ctl - 1)
        u_steps = u_batch.reshape(batch, cfg.n_ctl, 2)[:, idx, :]
        q_i = u_steps[..., 0] + (NOMINAL_Q_IN + v_hat[0])
        q_w = u_steps[..., 1] + (NOMINAL_Q_WATER + v_hat[1])
        flow = q_i + q_w
        net = flow - self.op.q_out
        mass = self.op.rho_in * q_i + q_w
        v0 = self.op.state.v + x0_dev[0]
        v_traj = v0 + dt * np.cumsum(net, axis=1)
        v_start = np.concatenate([np.full((batch, 1), v0), v_traj[:, :-1]], axis=1)
        # Guard against non-physical candidates (v <= 0); the huge tracking and
        # slack cost of such rollouts already rejects them.
        eps = 1e-3
        inv1 = 1.0 / np.maximum(v_start, eps)
        invm = 1.0 / np.maximum(v_start + 0.5 * dt * net, eps)
        inv4 = 1.0 / np.maximum(v_start + dt * net, eps)
        p1, pm, p4 = flow * inv1, flow * invm, flow * inv4
        half = 0.5 * dt
        a1, b1 = mass * inv1, p1
        a2 = mass * invm - half * pm * a1
        b2 = pm * (1.0 - half * b1)
        a3 = mass * invm - half * pm * a2
        b3 = pm * (1.0 - half * b2)
        a4 = mass * inv4 - dt * p4 * a3
        b4 = p4 * (1.0 - dt * b3)
        gain = 1.0 - (dt / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        offset = (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        rho_traj = np.empty((batch, cfg.n_pred))
        rho = np.full(batch, self.op.state.rho + x0_dev[1])
        for j in range(cfg.n_pred):
            rho = gain[:, j] * rho + offset[:, j]
            rho_traj[:, j] = rho
        y = np.empty((batch, cfg.n_pred, 2))
        y[..., 0] = v_traj - self.op.state.v
        y[..., 1] = rho_traj - self.op.state.rho
        return y

    def outputs(self, x0, v_hat, u_flat) -> np.ndarray:
        return self.rollout(x0, v_hat, u_flat[None, :])[0]

    def batch_objective(self, x0, v_hat, r_dev, u_prev, u_batch) -> np.ndarray:
        y = self.rollout(x0, v_hat, u_batch)
        return _batched_cost(self.cfg, y, u_batch, u_prev, r_dev)

    def objective(self, x0, v_hat, r_dev, u_prev):
        n_dec = 2 * self.cfg.n_ctl

        def fg(u_flat: np.ndarray):
            steps = self.fd_step * np.maximum(1.0, np.abs(u_flat))
            batch = np.tile(u_flat, (1 + 2 * n_dec, 1))
            for i in range(n_dec):
                batch[1 + 2 * i, i] += steps[i]
                batch[2 + 2 * i, i] -= steps[i]
            values = self.batch_objective(x0, v_hat, r_dev, u_prev, batch)
            grad = (values[1::2] - values[2::2]) / (2.0 * steps)
            return values[0], grad

        return fg


def _first_move_bounds(cfg: MpcConfig, u_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Box for the whole sequence; the per-sample rate limit shrinks move one."""
    lower = np.tile(cfg.u_min, cfg.n_ctl)
    upper = np.tile(cfg.u_max, cfg.n_ctl)
    if cfg.du_limit is not None:
        lower[:2] = np.maximum(lower[:2], u_prev - cfg.du_limit)
        upper[:2] = np.minimum(upper[:2], u_prev + cfg.du_limit)
        lower[:2] = np.minimum(lower[:2], upper[:2])
    return lower, upper


def mpc_solve(cfg: MpcConfig, predictor, x0: np.ndarray, v_hat: np.ndarray,
              r_dev: np.ndarray, u_prev: np.ndarray,
              warm_start: np.ndarray | None = None,
              settings: SolverSettings = SolverSettings()) -> tuple[np.ndarray, np.ndarray]:
    """Minimize the soft-constrained quadratic cost over the input box.

    The single slack per output is eliminated analytically (it equals the
    largest violation over the horizon), leaving a box-constrained smooth
    problem solved by projected quasi-Newton (L-BFGS-B). Returns the optimal
    input sequence (n_ctl, 2) in deviation units and the slack pair.
    Raises MpcSolverError when the iteration cap is hit.
    """
    x0 = np.asarray(x0, dtype=float)
    v_hat = np.asarray(v_hat, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    lower, upper = _first_move_bounds(cfg, u_prev)
    if warm_start is None:
        start = np.tile(u_prev, cfg.n_ctl)
    else:
        start = np.asarray(warm_start, dtype=float).ravel().copy()
    start = np.clip(start, lower, upper)
    fg = predictor.objective(x0, v_hat, r_dev, u_prev)
    result = scipy.optimize.minimize(
        fg, start, jac=True, method="L-BFGS-B",
        bounds=scipy.optimize.Bounds(lower, upper),
        options={"maxiter": settings.max_iter, "ftol": settings.ftol, "gtol": settings.gtol},
    )
    if result.status == 1:
        raise MpcSolverError(f"iteration cap {settings.max_iter} reached")
    if result.status != 0:
        # Abnormal line-search exit: accept only near-stationary points.
        projected = result.x - np.clip(result.x - result.jac, lower, upper)
        if np.max(np.abs(projected)) > 1e-6:
            raise MpcSolverError(f"solver stopped abnormally: {result.message}")
    u_seq = result.x.reshape(cfg.n_ctl, 2)
    delta = _slack_from_outputs(cfg, predictor.outputs(x0, v_hat, result.x))
    return u_seq, delta


class MpcController(Controller):
    """MPC competitor with dual observers for bumpless transfer.

    Both observers run every sample: one is fed the controller's own simulated
    loop, the other the real plant measurement and the input actually applied.
    The optimization consumes the plant-fed estimate while this controller is
    active and the simulation-fed estimate otherwise, so activation needs no
    state surgery.
    """

    def __init__(self, ident: int, label: str, cfg: MpcConfig, predictor,
                 model: LinearModel, settings: SolverSettings = SolverSettings()):
        self.ident = ident
        self.label = label
        self.cfg = cfg
        self.predictor = predictor
        self.settings = settings
        self.sim_observer = DisturbanceObserver(model)
        self.plant_observer = DisturbanceObserver(model)
        self._sim_u_prev = np.zeros(2)
        self._plant_u_prev = np.zeros(2)
        self._sim_warm = np.zeros(2 * cfg.n_ctl)
        self._plant_warm = np.zeros(2 * cfg.n_ctl)
        self._plant_estimate: ObserverState | None = None

    def reset(self) -> None:
        self.sim_observer.reset()
        self.plant_observer.reset()
        self._sim_u_prev = np.zeros(2)
        self._plant_u_prev = np.zeros(2)
        self._sim_warm = np.zeros(2 * self.cfg.n_ctl)
        self._plant_warm = np.zeros(2 * self.cfg.n_ctl)
        self._plant_estimate = None

    def _solve(self, y_dev: np.ndarray, v_hat: np.ndarray, r: np.ndarray,
               u_prev: np.ndarray, warm: np.ndarray) -> np.ndarray:
        # Both states are measured, so predictions start from the measurement;
        # the observer contributes the input-disturbance estimates only.
        r_dev = np.asarray(r, dtype=float) - NOMINAL_OUTPUTS
        try:
            u_seq, _ = mpc_solve(self.cfg, self.predictor, y_dev, v_hat,
                                 r_dev, u_prev, warm_start=warm,
                                 settings=self.settings)
        except MpcSolverError:
            u_seq = np.tile(u_prev, (self.cfg.n_ctl, 1))  # hold previous input
        return u_seq

    @staticmethod
    def _shift(u_seq: np.ndarray) -> np.ndarray:
        return np.concatenate([u_seq[1:].ravel(), u_seq[-1]])

    # Simulated evaluation loop -------------------------------------------------
    def sim_command(self, r, y) -> ControlInput:
        y_dev = np.asarray(y, dtype=float) - NOMINAL_OUTPUTS
        estimate = self.sim_observer.correct(y_dev)
        u_seq = self._solve(y_dev, estimate.v_hat, r, self._sim_u_prev, self._sim_warm)
        self._sim_warm = self._shift(u_seq)
        u_abs = NOMINAL_INPUTS + u_seq[0]
        return ControlInput(u_abs[0], u_abs[1])

    def sim_commit(self, u_applied: ControlInput) -> None:
        u_dev = u_applied.as_array() - NOMINAL_INPUTS
        self.sim_observer.predict(u_dev)
        self._sim_u_prev = u_dev

    # Plant loop ----------------------------------------------------------------
    def plant_observe(self, r, y) -> None:
        self._plant_estimate = self.plant_observer.correct(
            np.asarray(y, dtype=float) - NOMINAL_OUTPUTS)

    def plant_command(self, r, y) -> ControlInput:
        if self._plant_estimate is None:
            raise RuntimeError("plant_command called before plant_observe")
        y_dev = np.asarray(y, dtype=float) - NOMINAL_OUTPUTS
        u_seq = self._solve(y_dev, self._plant_estimate.v_hat, r,
                            self._plant_u_prev, self._plant_warm)
        self._plant_warm = self._shift(u_seq)
        u_abs = NOMINAL_INPUTS + u_seq[0]
        return ControlInput(u_abs[0], u_abs[1])

    def plant_commit(self, u_applied: ControlInput) -> None:
        u_dev = u_applied.as_array() - NOMINAL_INPUTS
        self.plant_observer.predict(u_dev)
        self._plant_u_prev = u_dev
        self._plant_estimate = None

    def activate(self, r, y, u_applied_prev: ControlInput) -> None:
        # The plant-fed observer is already converged; just seed the warm start.
        u_dev = u_applied_prev.as_array() - NOMINAL_INPUTS
        self._plant_u_prev = u_dev
        self._plant_warm = np.tile(u_dev, self.cfg.n_ctl)
