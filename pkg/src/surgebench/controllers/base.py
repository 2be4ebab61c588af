"""Common closed interface implemented by every competitor and the fallback.

Each controller instance owns two independent internal states:

* a *simulation* side, advanced by the supervisory layer's evaluation loop
  (``sim_command`` / ``sim_commit``), and
* a *plant* side, fed the real measurements and the inputs actually applied
  (``plant_observe`` / ``plant_command`` / ``plant_commit``), which makes a
  later hand-over bumpless.

Commands are issued in two phases because the input finally applied may be
clamped by the supervisory constraint layer: ``*_command`` produces the raw
command for the current sample, ``*_commit`` then advances internal state with
the input that was actually applied.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from ..plant import ControlInput


class Controller(ABC):
    """A competitor (or the local fallback) behind the common interface."""

    ident: int = -1
    label: str = "controller"

    # Simulated evaluation loop -------------------------------------------------
    @abstractmethod
    def sim_command(self, r: np.ndarray, y: np.ndarray) -> ControlInput:
        """Command for the controller's own simulated closed loop."""

    @abstractmethod
    def sim_commit(self, u_applied: ControlInput) -> None:
        """Advance simulation-side state after the input was applied."""

    # Plant loop ----------------------------------------------------------------
    def plant_observe(self, r: np.ndarray, y: np.ndarray) -> None:
        """Consume the plant measurement (every sample, active or not)."""

    @abstractmethod
    def plant_command(self, r: np.ndarray, y: np.ndarray) -> ControlInput:
        """Command for the real plant; only called while this controller is active."""

    @abstractmethod
    def plant_commit(self, u_applied: ControlInput) -> None:
        """Advance plant-side state with the input actually applied to the plant."""

    def activate(self, r: np.ndarray, y: np.ndarray, u_applied_prev: ControlInput) -> None:
        """Bumpless-transfer hook invoked when control is handed to this controller."""

    @abstractmethod
    def reset(self) -> None:
        """Return both internal sides to their initial condition."""
