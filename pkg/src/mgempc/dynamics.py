"""Battery/grid model and the augmented running-peak dynamics.

State is (SOC, running NCDP, running OPDP).  SOC evolves linearly with
battery dispatch; the two peak states ratchet up with grid import via a
running max.  Sign conventions: ``u1 > 0`` charges the battery,
``u2 > 0`` imports from the grid, and power balance requires
``u1 - u2 = c(t)`` where ``c = pv - load`` is the net injection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DynamicsError, InfeasibleError, InputError
from .tariff import TariffSchedule, onpeak_indicator


@dataclass(frozen=True)
class MicrogridParams:
    """Physical parameters of the battery and grid interconnection.

    Grid exchange bounds are deliberately wide; they exist so the import
    variable lives in a compact set, not to constrain normal operation.
    """

    bess_energy_kwh: float = 2500.0
    bess_power_kw: float = 700.0
    soc_min: float = 0.2
    soc_max: float = 0.8
    eta: float = 0.8
    grid_lo: float = -20000.0  # kW, most negative allowed import (export)
    grid_hi: float = 20000.0   # kW, largest allowed import
    soc_init: float = 0.5

    def __post_init__(self):
        if not (0 <= self.soc_min < self.soc_max <= 1):
            raise InputError(
                f"need 0 <= soc_min < soc_max <= 1, got [{self.soc_min}, {self.soc_max}]"
            )
        if self.bess_power_kw < 0:
            raise InputError("bess_power_kw must be nonnegative")
        if self.bess_energy_kwh <= 0:
            raise InputError("bess_energy_kwh must be positive")
        if not (0 < self.eta <= 1):
            raise InputError(f"eta must be in (0, 1], got {self.eta}")
        if not (self.grid_lo < 0 < self.grid_hi):
            raise InputError(
                f"need grid_lo < 0 < grid_hi, got [{self.grid_lo}, {self.grid_hi}]"
            )
        if not (self.soc_min <= self.soc_init <= self.soc_max):
            raise InputError(f"soc_init {self.soc_init} outside SOC bounds")


@dataclass(frozen=True)
class ExogenousSeries:
    """PV generation and gross load, kW, sampled at the scenario step."""

    pv_kw: np.ndarray
    load_kw: np.ndarray

    def __post_init__(self):
        pv = np.asarray(self.pv_kw, dtype=float)
        load = np.asarray(self.load_kw, dtype=float)
        object.__setattr__(self, "pv_kw", pv)
        object.__setattr__(self, "load_kw", load)
        if pv.shape != load.shape or pv.ndim != 1:
            raise InputError("pv_kw and load_kw must be 1-d arrays of equal length")
        if np.any(pv < 0):
            raise InputError("pv_kw must be nonnegative")
        if np.any(load < 0):
            raise InputError("load_kw must be nonnegative")

    def __len__(self) -> int:
        return len(self.pv_kw)

    @property
    def c(self) -> np.ndarray:
        """Net injection pv - load, kW (positive means surplus)."""
        return self.pv_kw - self.load_kw


@dataclass(frozen=True)
class AugmentedState:
    x1: float  # SOC fraction
    x2: float  # running monthly import peak, kW
    x3: float  # running on-peak import peak, kW

    def __post_init__(self):
        object.__setattr__(self, "x1", float(self.x1))
        object.__setattr__(self, "x2", float(self.x2))
        object.__setattr__(self, "x3", float(self.x3))

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3])


@dataclass(frozen=True)
class ControlInput:
    u1: float  # battery dispatch, kW, positive charging
    u2: float  # grid import, kW

    def __post_init__(self):
        object.__setattr__(self, "u1", float(self.u1))
        object.__setattr__(self, "u2", float(self.u2))

    def as_array(self) -> np.ndarray:
        return np.array([self.u1, self.u2])


def advance_augmented(
    x: AugmentedState,
    u: ControlInput,
    t: int,
    params: MicrogridParams,
    tariff: TariffSchedule,
    start_hour: float = 0.0,
    check: bool = True,
    atol: float = 1e-6,
) -> AugmentedState:
    """One-step successor state.

    SOC moves by ``u1 * dt / capacity``; the peak states take the running
    max of the grid import (gated by the on-peak indicator for the third
    state).  With ``check`` enabled, input and resulting SOC bounds are
    verified to within ``atol`` and violations raise naming the bound.
    """
    if check:
        if abs(u.u1) > params.bess_power_kw + atol:
            raise DynamicsError(
                f"bess power bound violated at step {t}: |{u.u1}| > {params.bess_power_kw}"
            )
        if not (params.grid_lo - atol <= u.u2 <= params.grid_hi + atol):
            raise DynamicsError(
                f"grid exchange bound violated at step {t}: u2={u.u2} outside "
                f"[{params.grid_lo}, {params.grid_hi}]"
            )
    x1n = x.x1 + u.u1 * (tariff.dt_hours / params.bess_energy_kwh)
    if check and not (params.soc_min - atol <= x1n <= params.soc_max + atol):
        raise DynamicsError(
            f"soc bound violated at step {t}: {x1n} outside "
            f"[{params.soc_min}, {params.soc_max}]"
        )
    x2n = max(x.x2, u.u2)
    if onpeak_indicator(t, tariff, start_hour):
        x3n = max(x.x3, u.u2)
    else:
        x3n = x.x3
    return AugmentedState(x1n, x2n, x3n)


def feasible_input_set(
    x: AugmentedState,
    t: int,
    params: MicrogridParams,
    series: ExogenousSeries,
    dt_hours: float,
) -> tuple[float, float]:
    """Interval of battery dispatch ``u1`` feasible at step ``t``.

    Intersects the power rating, the grid-exchange bounds after
    eliminating ``u2 = u1 - c(t)``, and the one-step SOC bounds.
    """
    c = float(series.c[t])
    ratio = params.bess_energy_kwh / dt_hours
    lo = max(
        -params.bess_power_kw,
        params.grid_lo + c,
        (params.soc_min - x.x1) * ratio,
    )
    hi = min(
        params.bess_power_kw,
        params.grid_hi + c,
        (params.soc_max - x.x1) * ratio,
    )
    if lo > hi:
        raise InfeasibleError(
            f"empty feasible dispatch interval at step {t}: [{lo}, {hi}]"
        )
    return lo, hi


def terminal_control_law(
    x: AugmentedState,
    t: int,
    mode: str,
    ref_u1,
    series: ExogenousSeries,
    params: MicrogridParams,
    atol: float = 1e-6,
) -> ControlInput:
    """Terminal-step input that keeps the power balance.

    ``mode='choice1'`` requires the lagged reference dispatch in
    ``ref_u1``.  ``mode='relaxed'`` accepts any feasible dispatch and
    defaults to zero, which yields ``u2 = -c(t)``.
    """
    if mode == "choice1":
        if ref_u1 is None:
            raise InputError("choice1 terminal law requires the lagged reference dispatch")
        u1 = float(ref_u1)
    elif mode == "relaxed":
        u1 = float(ref_u1) if ref_u1 is not None else 0.0
    else:
        raise InputError(f"unknown terminal law mode {mode!r}")
    u2 = u1 - float(series.c[t])
    if not (params.grid_lo - atol <= u2 <= params.grid_hi + atol):
        raise DynamicsError(
            f"terminal law import {u2} outside [{params.grid_lo}, {params.grid_hi}] at step {t}"
        )
    return ControlInput(u1, u2)
