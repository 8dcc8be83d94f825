import numpy as np
import pytest

from mgempc.dynamics import ExogenousSeries, MicrogridParams, feasible_input_set, AugmentedState
from mgempc.tariff import BillingWindow, TariffSchedule


@pytest.fixture
def tariff():
    return TariffSchedule()


@pytest.fixture
def params():
    return MicrogridParams()


@pytest.fixture
def small_params():
    # Fast-traversal battery: minimum horizon is 3 steps, so N=4 works.
    return MicrogridParams(bess_energy_kwh=2500.0, bess_power_kw=2000.0)


def flat_series(n, net=0.0, pv=0.0):
    """Series with constant net injection ``net`` (load adjusted to match)."""
    pv_arr = np.full(n, float(pv))
    load = pv_arr - float(net)
    if np.any(load < 0):
        pv_arr = pv_arr - load.min()
        load = pv_arr - float(net)
    return ExogenousSeries(pv_arr, load)


def random_feasible_trajectory(rng, params, tariff, window, series, x0=None):
    """Sample a dynamically consistent trajectory by drawing dispatch uniformly.

    Returns (states, inputs) arrays shaped (T+1, 3) and (T, 2); the peak
    states follow the running-max recursion from zero (or from ``x0``).
    """
    T = window.length_T
    t0 = window.start_step
    if x0 is None:
        x0 = AugmentedState(params.soc_init, 0.0, 0.0)
    states = np.zeros((T + 1, 3))
    inputs = np.zeros((T, 2))
    states[0] = x0.as_array()
    x = x0
    for i in range(T):
        lo, hi = feasible_input_set(x, t0 + i, params, series, tariff.dt_hours)
        u1 = rng.uniform(lo, hi)
        u2 = u1 - float(series.c[t0 + i])
        inputs[i] = (u1, u2)
        x1 = x.x1 + u1 * (tariff.dt_hours / params.bess_energy_kwh)
        x2 = max(x.x2, u2)
        x3 = max(x.x3, u2) if window.onpeak_mask[i] else x.x3
        x = AugmentedState(x1, x2, x3)
        states[i + 1] = x.as_array()
    return states, inputs


@pytest.fixture
def make_window():
    def _make(tariff, T, start_step=0, start_hour=0.0):
        return BillingWindow.from_tariff(tariff, T, start_step, start_hour)

    return _make
