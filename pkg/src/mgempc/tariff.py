"""Tariff structure and the exact monthly electricity bill.

The bill has four components: volumetric energy charges, battery
round-trip losses priced at the energy rate, a non-coincident demand
charge (NCDC) on the monthly import peak, and an on-peak demand charge
(OPDC) on the import peak inside the daily on-peak window.  The same
bill can be written as a sum of per-step stage costs over running-peak
states; ``decompose_check`` verifies that identity on a concrete
trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import InputError

ArrayLike = Union[float, np.ndarray]


def hour_of_step(t: int, dt_hours: float, start_hour: float = 0.0) -> float:
    """Wall-clock hour of day at which step ``t`` begins."""
    return (start_hour + t * dt_hours) % 24.0


@dataclass(frozen=True)
class TariffSchedule:
    """Rates and on-peak window of the utility tariff.

    ``energy_rate`` may be a scalar (flat rate) or a per-step array
    indexed by absolute step.  Demand rates are $/kW on the relevant
    running peak.  The on-peak window is the half-open hour interval
    ``[onpeak_start_hour, onpeak_end_hour)``.
    """

    energy_rate: ArrayLike = 0.1  # $/kWh
    ncdc_rate: float = 24.48      # $/kW
    opdc_rate: float = 19.19      # $/kW
    onpeak_start_hour: float = 16.0
    onpeak_end_hour: float = 21.0
    dt_hours: float = 0.25

    def __post_init__(self):
        if self.ncdc_rate < 0 or self.opdc_rate < 0:
            raise InputError("demand charge rates must be nonnegative")
        if self.dt_hours <= 0:
            raise InputError(f"dt_hours must be positive, got {self.dt_hours}")
        if not (0 <= self.onpeak_start_hour < self.onpeak_end_hour <= 24):
            raise InputError(
                "on-peak window must be a nonempty sub-interval of [0, 24), got "
                f"[{self.onpeak_start_hour}, {self.onpeak_end_hour})"
            )
        if np.any(np.asarray(self.energy_rate) < 0):
            raise InputError("energy_rate must be nonnegative")

    def rate(self, t: int) -> float:
        """Energy rate $/kWh at absolute step ``t``."""
        if np.isscalar(self.energy_rate):
            return float(self.energy_rate)
        return float(np.asarray(self.energy_rate)[t])

    def rate_array(self, steps: np.ndarray) -> np.ndarray:
        """Energy rates for an array of absolute steps."""
        if np.isscalar(self.energy_rate):
            return np.full(len(steps), float(self.energy_rate))
        return np.asarray(self.energy_rate, dtype=float)[steps]


def onpeak_indicator(t: int, tariff: TariffSchedule, start_hour: float = 0.0) -> int:
    """1 if step ``t`` starts inside the on-peak window, else 0.

    The window is half-open: a step starting exactly at the window end
    hour is off-peak.
    """
    h = hour_of_step(t, tariff.dt_hours, start_hour)
    return int(tariff.onpeak_start_hour <= h < tariff.onpeak_end_hour)


@dataclass(frozen=True)
class BillingWindow:
    """The billing window: a contiguous block of steps with its on-peak mask."""

    start_step: int
    length_T: int
    onpeak_mask: np.ndarray
    start_hour: float = 0.0

    def __post_init__(self):
        if self.length_T <= 0:
            raise InputError(f"window length must be positive, got {self.length_T}")
        if len(self.onpeak_mask) != self.length_T:
            raise InputError(
                f"onpeak_mask has {len(self.onpeak_mask)} entries, expected {self.length_T}"
            )

    @classmethod
    def from_tariff(
        cls,
        tariff: TariffSchedule,
        length_T: int,
        start_step: int = 0,
        start_hour: float = 0.0,
    ) -> "BillingWindow":
        mask = np.array(
            [
                bool(onpeak_indicator(start_step + i, tariff, start_hour))
                for i in range(length_T)
            ]
        )
        return cls(start_step, length_T, mask, start_hour)


@dataclass(frozen=True)
class PeakScaling:
    """Step-indexed coefficients applied to the running-peak states.

    Both functions must equal 1 at the end of the billing window for the
    stage-cost decomposition to reproduce the bill.  The default used in
    all shipped scenarios is the constant 1.
    """

    a: Callable[[int], float] = field(default=lambda t: 1.0)
    b: Callable[[int], float] = field(default=lambda t: 1.0)

    @classmethod
    def ones(cls) -> "PeakScaling":
        return cls()


@dataclass(frozen=True)
class CostBreakdown:
    """Monthly bill split into its four components, in dollars."""

    energy_cost: float
    bess_loss_cost: float
    ncdc: float
    opdc: float
    total: float

    def as_dict(self) -> dict:
        return {
            "energy_cost": self.energy_cost,
            "bess_loss_cost": self.bess_loss_cost,
            "ncdc": self.ncdc,
            "opdc": self.opdc,
            "total": self.total,
        }


def monthly_cost(
    u1,
    u2,
    window: BillingWindow,
    tariff: TariffSchedule,
    eta: float,
) -> CostBreakdown:
    """Exact monthly electricity cost of an input trajectory.

    ``u1`` is the battery dispatch (kW, positive charging) and ``u2`` the
    grid import (kW), both covering the billing window.  Demand charges
    are clamped at zero; the OPDC is zero when the window contains no
    on-peak steps.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if len(u1) != window.length_T or len(u2) != window.length_T:
        raise InputError(
            f"series lengths ({len(u1)}, {len(u2)}) do not match window length {window.length_T}"
        )
    steps = window.start_step + np.arange(window.length_T)
    rates = tariff.rate_array(steps)
    dt = tariff.dt_hours
    energy = float(np.sum(rates * dt * u2))
    loss = float(np.sum(rates * dt * 0.5 * (1.0 - eta) * np.abs(u1)))
    ncdc = tariff.ncdc_rate * max(0.0, float(np.max(u2)))
    if window.onpeak_mask.any():
        opdc = tariff.opdc_rate * max(0.0, float(np.max(u2[window.onpeak_mask])))
    else:
        opdc = 0.0
    total = energy + loss + ncdc + opdc
    return CostBreakdown(energy, loss, ncdc, opdc, total)


def stage_cost(
    x,
    x_next,
    u,
    t: int,
    tariff: TariffSchedule,
    scaling: PeakScaling,
    eta: float,
) -> float:
    """Additive per-step economic cost at step ``t``.

    ``x_next`` must be the successor of ``x`` under ``u`` (the caller
    guarantees dynamic consistency).  The peak-increment terms use the
    scaled running peaks so that the stage costs telescope to the
    monthly bill.
    """
    r = tariff.rate(t)
    dt = tariff.dt_hours
    e = r * dt * (u.u2 + 0.5 * (1.0 - eta) * abs(u.u1))
    nc = tariff.ncdc_rate * (scaling.a(t + 1) * x_next.x2 - scaling.a(t) * x.x2)
    op = tariff.opdc_rate * (scaling.b(t + 1) * x_next.x3 - scaling.b(t) * x.x3)
    return e + nc + op


def decompose_check(
    states: np.ndarray,
    inputs: np.ndarray,
    window: BillingWindow,
    tariff: TariffSchedule,
    scaling: PeakScaling,
    eta: float,
    atol: float = 1e-9,
) -> float:
    """Absolute gap between the summed stage costs and the monthly bill.

    ``states`` has shape (T+1, 3) with columns (soc, running NCDP,
    running OPDP); ``inputs`` has shape (T, 2) with columns (u1, u2).
    Requires zero initial peaks and unit scaling at the window end, and
    validates that the peak states follow the running-max recursion.
    """
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    T = window.length_T
    if states.shape != (T + 1, 3) or inputs.shape != (T, 2):
        raise InputError(
            f"expected states ({T + 1}, 3) and inputs ({T}, 2), got "
            f"{states.shape} and {inputs.shape}"
        )
    if states[0, 1] != 0.0 or states[0, 2] != 0.0:
        raise InputError("decomposition requires zero initial running peaks")
    end = window.start_step + T
    if abs(scaling.a(end) - 1.0) > 1e-12 or abs(scaling.b(end) - 1.0) > 1e-12:
        raise InputError("peak scaling must equal 1 at the window end")
    # Dynamic consistency of the running peaks.
    for i in range(T):
        x2n = max(states[i, 1], inputs[i, 1])
        if window.onpeak_mask[i]:
            x3n = max(states[i, 2], inputs[i, 1])
        else:
            x3n = states[i, 2]
        if abs(states[i + 1, 1] - x2n) > atol or abs(states[i + 1, 2] - x3n) > atol:
            raise InputError(f"trajectory is not dynamically consistent at step {i}")

    from .dynamics import AugmentedState, ControlInput  # deferred: avoids cycle

    t0 = window.start_step
    total_stage = 0.0
    for i in range(T):
        x = AugmentedState(*states[i])
        xn = AugmentedState(*states[i + 1])
        u = ControlInput(*inputs[i])
        total_stage += stage_cost(x, xn, u, t0 + i, tariff, scaling, eta)
    bill = monthly_cost(inputs[:, 0], inputs[:, 1], window, tariff, eta)
    return abs(total_stage - bill.total)
