"""Small dense matrix utilities and integrators shared by every other module.

All functions are pure: they never mutate their arguments and hold no state,
so they are safe to call concurrently.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg


class RiccatiConvergenceError(RuntimeError):
    """Raised when the steady-state Riccati iteration fails to converge."""

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"Riccati iteration did not converge after {iterations} iterations "
            f"(last relative change {residual:.3e})"
        )


def matrix_exponential(m: np.ndarray, t: float = 1.0) -> np.ndarray:
    """e^(M t) for a square matrix, via scaling-and-squaring with Pade."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix_exponential needs a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix_exponential: non-finite entries")
    return scipy.linalg.expm(m * t)


def discretize_zoh(a: np.ndarray, b: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold pair (Phi, Gamma) of a continuous LTI system.

    Uses the augmented block exponential exp([[A, B], [0, 0]] dt), which stays
    valid when A is singular (the surge-tank A has a zero eigenvalue, so the
    closed form A^-1 (e^(A dt) - I) B is not usable in general).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"discretize_zoh: A must be square, got shape {a.shape}")
    if b.ndim != 2 or b.shape[0] != a.shape[0]:
        raise ValueError(f"discretize_zoh: B shape {b.shape} does not conform with A {a.shape}")
    if dt <= 0:
        raise ValueError(f"discretize_zoh: dt must be positive, got {dt}")
    n, m = b.shape
    block = np.zeros((n + m, n + m))
    block[:n, :n] = a
    block[:n, n:] = b
    exp_block = matrix_exponential(block, dt)
    return exp_block[:n, :n], exp_block[:n, n:]


def pseudoinverse(m: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse (SVD, truncation at 1e-12 * sigma_max)."""
    return np.linalg.pinv(np.asarray(m, dtype=float), rcond=1e-12)


def rk4_step(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of x' = f(x)."""
    if dt <= 0:
        raise ValueError(f"rk4_step: dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(f(x), dtype=float)
    k2 = np.asarray(f(x + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(f(x + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(f(x + dt * k3), dtype=float)
    if not (np.all(np.isfinite(k1)) and np.all(np.isfinite(k2))
            and np.all(np.isfinite(k3)) and np.all(np.isfinite(k4))):
        raise ValueError("rk4_step: non-finite derivative evaluation")
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def kalman_gain(phi: np.ndarray, c: np.ndarray, qw: np.ndarray, rn: np.ndarray,
                tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Steady-state filter gain from iterating the discrete Riccati recursion.

    Iterates the a-priori covariance P <- Phi (P - P C'(C P C' + Rn)^-1 C P) Phi' + Qw
    to a fixed point (relative change < tol) and returns L = P C'(C P C' + Rn)^-1.
    Raises RiccatiConvergenceError naming the iteration count on non-convergence.
    """
    phi = np.asarray(phi, dtype=float)
    c = np.atleast_2d(np.asarray(c, dtype=float))
    qw = np.asarray(qw, dtype=float)
    rn = np.atleast_2d(np.asarray(rn, dtype=float))
    n = phi.shape[0]
    p = np.eye(n)
    for _ in range(max_iter):
        cpct = c @ p @ c.T + rn
        gain = p @ c.T @ np.linalg.inv(cpct)
        p_next = phi @ (p - gain @ c @ p) @ phi.T + qw
        p_next = 0.5 * (p_next + p_next.T)
        change = np.linalg.norm(p_next - p) / max(np.linalg.norm(p_next), 1e-300)
        p = p_next
        if change < tol:
            cpct = c @ p @ c.T + rn
            return p @ c.T @ np.linalg.inv(cpct)
    raise RiccatiConvergenceError(max_iter, change)


def singular_values(m: np.ndarray) -> np.ndarray:
    """Singular values of a real or complex matrix, descending, each >= 0."""
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise ValueError("singular_values: non-finite entries")
    return np.linalg.svd(m, compute_uv=False)
