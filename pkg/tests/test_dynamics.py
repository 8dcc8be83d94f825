import numpy as np
import pytest

from mgempc.dynamics import (
    AugmentedState,
    ControlInput,
    ExogenousSeries,
    MicrogridParams,
    advance_augmented,
    feasible_input_set,
    terminal_control_law,
)
from mgempc.errors import DynamicsError, InfeasibleError, InputError

from conftest import flat_series


def onpeak_step(tariff):
    # dt 0.25 from midnight: step 68 begins at 17:00.
    return int(round(17.0 / tariff.dt_hours))


class TestAdvance:
    def test_charging_updates_soc_and_peak(self, tariff, params):
        x = advance_augmented(
            AugmentedState(0.5, 0, 0), ControlInput(700, 300), 0, params, tariff
        )
        assert x.x1 == pytest.approx(0.5 + 700 * 0.25 / 2500)
        assert x.x2 == 300.0
        assert x.x3 == 0.0

    def test_running_peak_keeps_prior_maximum(self, tariff, params):
        x = advance_augmented(
            AugmentedState(0.5, 500, 0), ControlInput(0, 300), 0, params, tariff
        )
        assert x.x2 == 500.0

    def test_onpeak_updates_third_state(self, tariff, params):
        x = advance_augmented(
            AugmentedState(0.5, 300, 100), ControlInput(0, 250), onpeak_step(tariff), params, tariff
        )
        assert x.x3 == 250.0

    def test_offpeak_leaves_third_state(self, tariff, params):
        x = advance_augmented(
            AugmentedState(0.5, 300, 100), ControlInput(0, 250), 0, params, tariff
        )
        assert x.x3 == 100.0

    def test_power_bound_violation_named(self, tariff, params):
        with pytest.raises(DynamicsError, match="bess power"):
            advance_augmented(AugmentedState(0.5, 0, 0), ControlInput(900, 0), 0, params, tariff)

    def test_grid_bound_violation_named(self, tariff, params):
        with pytest.raises(DynamicsError, match="grid"):
            advance_augmented(AugmentedState(0.5, 0, 0), ControlInput(0, 30000), 0, params, tariff)

    def test_soc_bound_violation_named(self, tariff, params):
        with pytest.raises(DynamicsError, match="soc"):
            advance_augmented(AugmentedState(0.79, 0, 0), ControlInput(700, 700), 0, params, tariff)

    def test_check_disabled_passes_through(self, tariff, params):
        x = advance_augmented(
            AugmentedState(0.79, 0, 0), ControlInput(700, 700), 0, params, tariff, check=False
        )
        assert x.x1 > params.soc_max


class TestFeasibleInputSet:
    def test_full_battery_cannot_charge(self, tariff, params):
        series = flat_series(4)
        x = AugmentedState(params.soc_max, 0, 0)
        lo, hi = feasible_input_set(x, 0, params, series, tariff.dt_hours)
        assert hi <= 0.0

    def test_power_bound_active_mid_soc(self, tariff, params):
        # SOC slack is 0.3*2500/0.25 = 3000 kW, so the 700 kW rating binds.
        series = flat_series(4, net=-10.0)
        lo, hi = feasible_input_set(AugmentedState(0.5, 0, 0), 0, params, series, tariff.dt_hours)
        assert (lo, hi) == (-700.0, 700.0)

    def test_zero_power_battery_pins_dispatch(self, tariff):
        params = MicrogridParams(bess_power_kw=0.0)
        series = flat_series(4, net=-120.0)
        lo, hi = feasible_input_set(AugmentedState(0.5, 0, 0), 0, params, series, tariff.dt_hours)
        assert (lo, hi) == (0.0, 0.0)

    def test_empty_interval_reported(self, tariff):
        params = MicrogridParams(grid_lo=-10.0, grid_hi=10.0)
        series = ExogenousSeries(np.full(4, 10000.0), np.zeros(4))
        with pytest.raises(InfeasibleError):
            feasible_input_set(AugmentedState(0.5, 0, 0), 0, params, series, tariff.dt_hours)


class TestTerminalControlLaw:
    def test_choice1_uses_reference_dispatch(self, tariff, params):
        series = flat_series(4, net=-50.0)
        u = terminal_control_law(AugmentedState(0.5, 0, 0), 0, "choice1", 150.0, series, params)
        assert (u.u1, u.u2) == (150.0, 200.0)

    def test_relaxed_defaults_to_zero_dispatch(self, tariff, params):
        series = flat_series(4, net=-120.0)
        u = terminal_control_law(AugmentedState(0.5, 0, 0), 0, "relaxed", None, series, params)
        assert (u.u1, u.u2) == (0.0, 120.0)

    def test_relaxed_balanced_is_zero(self, tariff, params):
        series = flat_series(4, net=0.0)
        u = terminal_control_law(AugmentedState(0.5, 0, 0), 0, "relaxed", None, series, params)
        assert (u.u1, u.u2) == (0.0, 0.0)

    def test_choice1_requires_reference_dispatch(self, params):
        with pytest.raises(InputError):
            terminal_control_law(AugmentedState(0.5, 0, 0), 0, "choice1", None, flat_series(4), params)

    def test_grid_bound_enforced(self, tariff):
        params = MicrogridParams(grid_lo=-100.0, grid_hi=100.0)
        series = flat_series(4, net=-500.0)
        with pytest.raises(DynamicsError):
            terminal_control_law(AugmentedState(0.5, 0, 0), 0, "relaxed", None, series, params)


class TestProperties:
    def test_running_peaks_match_bruteforce(self, tariff, params):
        rng = np.random.default_rng(3)
        T = 200
        u2 = rng.uniform(-300, 600, T)
        x = AugmentedState(0.5, 0.0, 0.0)
        onpeak = []
        for t in range(T):
            beta = 16.0 <= (t * tariff.dt_hours) % 24 < 21.0
            onpeak.append(beta)
            x = advance_augmented(x, ControlInput(0, u2[t]), t, params, tariff, check=False)
        assert x.x2 == max(0.0, u2.max())
        assert x.x3 == max(0.0, u2[np.array(onpeak)].max())

    def test_soc_roundtrip_exact(self, tariff, params):
        rng = np.random.default_rng(5)
        for u1 in rng.uniform(-700, 700, 25):
            x0 = AugmentedState(0.5, 100, 50)
            fwd = advance_augmented(x0, ControlInput(u1, 0), 0, params, tariff, check=False)
            back = advance_augmented(fwd, ControlInput(-u1, 0), 1, params, tariff, check=False)
            assert back.x1 == x0.x1  # exact float round trip of +/- the same increment

    def test_feasible_interval_inputs_balance_and_advance(self, tariff, params):
        rng = np.random.default_rng(9)
        series = ExogenousSeries(rng.uniform(0, 400, 50), rng.uniform(0, 600, 50))
        x = AugmentedState(0.5, 0.0, 0.0)
        for t in range(50):
            lo, hi = feasible_input_set(x, t, params, series, tariff.dt_hours)
            u1 = rng.uniform(lo, hi)
            u2 = u1 - float(series.c[t])
            assert u1 - u2 == pytest.approx(series.c[t], abs=1e-9)
            x = advance_augmented(x, ControlInput(u1, u2), t, params, tariff)  # checks bounds

    def test_relaxed_law_is_sequentially_invariant(self, tariff, params):
        # From any admissible state, the zero-dispatch law keeps the state
        # admissible as long as the net load fits the grid bounds.
        rng = np.random.default_rng(13)
        series = ExogenousSeries(rng.uniform(0, 400, 40), rng.uniform(0, 600, 40))
        x = AugmentedState(0.37, 200.0, 120.0)
        for t in range(40):
            u = terminal_control_law(x, t, "relaxed", None, series, params)
            x = advance_augmented(x, u, t, params, tariff)
            assert params.soc_min <= x.x1 <= params.soc_max
            assert 0 <= x.x3 <= x.x2 <= params.grid_hi


class TestParamValidation:
    def test_soc_order(self):
        with pytest.raises(InputError):
            MicrogridParams(soc_min=0.8, soc_max=0.2)

    def test_grid_bounds_sign(self):
        with pytest.raises(InputError):
            MicrogridParams(grid_lo=5.0)

    def test_eta_range(self):
        with pytest.raises(InputError):
            MicrogridParams(eta=0.0)

    def test_negative_pv_rejected(self):
        with pytest.raises(InputError):
            ExogenousSeries(np.array([-1.0]), np.array([0.0]))
