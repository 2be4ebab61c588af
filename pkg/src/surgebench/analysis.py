"""Input/output controllability toolkit for small LTI models: state
controllability and observability, multivariable poles and zeros, the relative
gain array, scaled-model singular value sweeps, and the disturbance-rejection
test on G^-1 Gd.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .numerics import singular_values
from .plant import CANONICAL_OPERATING_POINT, LinearModel, linearize
from .rational import RationalMatrix, transfer_matrix

DEFAULT_OMEGA_GRID = np.logspace(-1, 4, 200)  # rad/hour

# Scaling diagonals that reproduce the published scaled models: output spans
# (7 m^3, 0.1 t/m^3), input spans (600, 150) m^3/h, disturbance span 0.5 t/m^3.
DEFAULT_SCALING_OUTPUTS = np.array([7.0, 0.1])
DEFAULT_SCALING_INPUTS = np.array([600.0, 150.0])
DEFAULT_SCALING_DISTURBANCE = np.array([0.5])


@dataclass(frozen=True)
class ScalingSet:
    """Diagonal output/input/disturbance scalings (physical signal spans)."""

    d_y: np.ndarray = field(default_factory=lambda: DEFAULT_SCALING_OUTPUTS.copy())
    d_u: np.ndarray = field(default_factory=lambda: DEFAULT_SCALING_INPUTS.copy())
    d_d: np.ndarray = field(default_factory=lambda: DEFAULT_SCALING_DISTURBANCE.copy())

    def __post_init__(self):
        for name, diag in (("d_y", self.d_y), ("d_u", self.d_u), ("d_d", self.d_d)):
            if np.any(np.asarray(diag) <= 0):
                raise ValueError(f"scaling {name} must have strictly positive diagonals")


def _rank(m: np.ndarray, tol_factor: float = 1e-9) -> int:
    sv = singular_values(m)
    if len(sv) == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol_factor * sv[0]))


def controllability_matrix(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, int]:
    """[B, AB, ..., A^(n-1) B] and its SVD rank."""
    a = np.asarray(a, dtype=float)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    blocks = [b]
    for _ in range(a.shape[0] - 1):
        blocks.append(a @ blocks[-1])
    matrix = np.hstack(blocks)
    return matrix, _rank(matrix)


def observability_matrix(a: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, int]:
    """[C; CA; ...; C A^(n-1)] and its SVD rank."""
    a = np.asarray(a, dtype=float)
    c = np.atleast_2d(np.asarray(c, dtype=float))
    blocks = [c]
    for _ in range(a.shape[0] - 1):
        blocks.append(blocks[-1] @ a)
    matrix = np.vstack(blocks)
    return matrix, _rank(matrix)


def poles_and_modes(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and right eigenvectors of the state matrix."""
    return np.linalg.eig(np.asarray(a, dtype=float))


def multivariable_zeros(g: RationalMatrix, tol: float = 1e-7) -> np.ndarray:
    """Frequencies where a square transfer matrix loses rank.

    Roots of the determinant's numerator that are not poles of the matrix.
    Raises if the determinant is structurally zero (normal rank deficient).
    """
    det = g.determinant().simplified()
    if det.is_zero():
        raise ValueError("transfer matrix is normal-rank deficient")
    if len(det.num) <= 1:
        return np.array([])
    candidates = np.polynomial.polynomial.polyroots(det.num)
    poles = g.pole_set()
    zeros = [z for z in candidates
             if not any(abs(z - p) < tol * max(1.0, abs(p)) for p in poles)]
    return np.array(zeros)


def rga(g_at_omega: np.ndarray) -> np.ndarray:
    """Relative gain array G x (G^-1)^T (elementwise product)."""
    g = np.asarray(g_at_omega)
    return g * np.linalg.inv(g).T


def scale_models(g: RationalMatrix, gd: RationalMatrix,
                 scaling: ScalingSet) -> tuple[RationalMatrix, RationalMatrix]:
    """Scaled plant and disturbance models Dy^-1 G Du and Dy^-1 Gd Dd."""
    inv_y = 1.0 / np.asarray(scaling.d_y, dtype=float)
    g_scaled = g.scale(inv_y, np.asarray(scaling.d_u, dtype=float)).simplified()
    gd_scaled = gd.scale(inv_y, np.asarray(scaling.d_d, dtype=float)).simplified()
    return g_scaled, gd_scaled


def disturbance_rejection_index(g_scaled: RationalMatrix, gd_scaled: RationalMatrix,
                                omegas: np.ndarray) -> np.ndarray:
    """Elementwise magnitudes of G^-1 Gd per frequency; rows of NaN mark
    frequencies where the plant evaluation is singular."""
    out = np.empty((len(omegas), g_scaled.rows))
    for i, omega in enumerate(omegas):
        g_eval = g_scaled.at_omega(omega)
        gd_eval = gd_scaled.at_omega(omega)
        try:
            out[i] = np.abs(np.linalg.solve(g_eval, gd_eval)).ravel()
        except np.linalg.LinAlgError:
            out[i] = np.nan
    return out


def singular_value_sweep(m: RationalMatrix, omegas: np.ndarray) -> np.ndarray:
    """Descending singular values of M(j omega) across the grid."""
    k = min(m.rows, m.cols)
    out = np.empty((len(omegas), k))
    for i, omega in enumerate(omegas):
        out[i] = singular_values(m.at_omega(omega))
    return out


def unity_crossing(m: RationalMatrix, omegas: np.ndarray) -> float | None:
    """Frequency where the largest singular value crosses magnitude one.

    Scans the grid for a sign change of (max sv - 1) and refines by bisection;
    None when no crossing lies inside the grid.
    """
    values = singular_value_sweep(m, omegas)[:, 0] - 1.0
    for i in range(len(omegas) - 1):
        if values[i] == 0.0:
            return float(omegas[i])
        if values[i] * values[i + 1] < 0.0:
            lo, hi = omegas[i], omegas[i + 1]
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if (singular_values(m.at_omega(mid))[0] - 1.0) * values[i] > 0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-10 * max(1.0, hi):
                    break
            return float(0.5 * (lo + hi))
    return None


def sweep_csv(omegas: np.ndarray, values: np.ndarray) -> str:
    out = io.StringIO()
    out.write("omega," + ",".join(f"sv{i + 1}" for i in range(values.shape[1])) + "\n")
    for omega, row in zip(omegas, values):
        out.write(f"{omega:.9g}," + ",".join(f"{x:.9g}" for x in row) + "\n")
    return out.getvalue()


def plant_transfer_matrices(model: LinearModel | None = None) -> tuple[RationalMatrix, RationalMatrix]:
    """Transfer matrices (G, Gd) of a state-space model (default: the tank)."""
    if model is None:
        model = linearize(CANONICAL_OPERATING_POINT)
    g = transfer_matrix(model.a, model.b, model.c)
    gd = transfer_matrix(model.a, model.gd, model.c)
    return g, gd


@dataclass(frozen=True)
class ControllabilityReport:
    controllability_rank: int
    observability_rank: int
    poles: np.ndarray
    zeros: np.ndarray
    rga_steady: np.ndarray
    rejection_index: np.ndarray  # per-frequency magnitudes of G^-1 Gd
    rejection_crossing: float | None  # where max sv of scaled Gd crosses 1
    omegas: np.ndarray
    plant_sweep: np.ndarray
    disturbance_sweep: np.ndarray

    def to_text(self) -> str:
        lines = ["input/output controllability analysis"]
        lines.append(f"controllability rank: {self.controllability_rank}")
        lines.append(f"observability rank:   {self.observability_rank}")
        poles = ", ".join(f"{p.real:.6g}" if abs(p.imag) < 1e-12 else f"{p:.6g}"
                          for p in np.sort_complex(self.poles))
        lines.append(f"poles: {{{poles}}}")
        if len(self.zeros) == 0:
            lines.append("multivariable zeros: none")
        else:
            lines.append("multivariable zeros: " + ", ".join(f"{z:.6g}" for z in self.zeros))
        lines.append("steady-state RGA:")
        for row in self.rga_steady:
            lines.append("  [" + ", ".join(f"{x.real:.6g}" for x in row) + "]")
        index = np.nanmax(self.rejection_index, axis=0)
        lines.append("rejection index |G~^-1 G~d| (max over grid): ["
                     + ", ".join(f"{x:.6g}" for x in index) + "]")
        if self.rejection_crossing is not None:
            lines.append(f"scaled disturbance gain crosses 1 at omega = "
                         f"{self.rejection_crossing:.6g} rad/h; control is needed below it")
        else:
            lines.append("scaled disturbance gain stays below 1 on the grid")
        worst = float(np.nanmax(self.rejection_index))
        if worst > 1.0:
            lines.append(f"perfect disturbance rejection is NOT possible "
                         f"(largest element {worst:.6g} > 1)")
        else:
            lines.append("perfect disturbance rejection is possible on this grid")
        return "\n".join(lines) + "\n"


def controllability_report(model: LinearModel | None = None,
                           scaling: ScalingSet | None = None,
                           omegas: np.ndarray | None = None) -> ControllabilityReport:
    """Run the full analysis on a model (defaults: the surge tank, published scalings)."""
    if model is None:
        model = linearize(CANONICAL_OPERATING_POINT)
    scaling = scaling or ScalingSet()
    omegas = DEFAULT_OMEGA_GRID if omegas is None else np.asarray(omegas, dtype=float)
    _, ctrl_rank = controllability_matrix(model.a, model.b)
    _, obs_rank = observability_matrix(model.a, model.c)
    eigenvalues, _ = poles_and_modes(model.a)
    g, gd = plant_transfer_matrices(model)
    zeros = multivariable_zeros(g)
    rga_steady = rga(g.at_omega(1e-6))
    g_scaled, gd_scaled = scale_models(g, gd, scaling)
    return ControllabilityReport(
        controllability_rank=ctrl_rank,
        observability_rank=obs_rank,
        poles=eigenvalues,
        zeros=zeros,
        rga_steady=rga_steady,
        rejection_index=disturbance_rejection_index(g_scaled, gd_scaled, omegas),
        rejection_crossing=unity_crossing(gd_scaled, omegas),
        omegas=omegas,
        plant_sweep=singular_value_sweep(g_scaled, omegas),
        disturbance_sweep=singular_value_sweep(gd_scaled, omegas),
    )
