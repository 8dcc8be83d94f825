import numpy as np
import pytest
import scipy.sparse as sp

from mgempc.convex import (
    HorizonProblem,
    Skeleton,
    build_horizon,
    controller_meta,
    direct_objective,
    dump_problem,
    solve,
    verify_epigraph_tightness,
)
from mgempc.dynamics import AugmentedState, ExogenousSeries, MicrogridParams
from mgempc.errors import BuildError, InputError
from mgempc.tariff import PeakScaling, TariffSchedule

from conftest import flat_series


def rand_series(rng, n, lo=-400, hi=400):
    net = rng.uniform(lo, hi, n)
    return ExogenousSeries(np.maximum(net, 0.0), np.maximum(-net, 0.0))


def rand_state(rng, params):
    x2 = rng.uniform(0, 500)
    return AugmentedState(
        rng.uniform(params.soc_min, params.soc_max), x2, rng.uniform(0, x2)
    )


class TestToyProblems:
    def test_epigraph_floor(self):
        # min m s.t. m >= x, m >= 3, 0 <= x <= 10
        p = HorizonProblem(
            n_var=2,
            lo=np.array([0.0, 3.0]),
            hi=np.array([10.0, np.inf]),
            c_lin=np.array([0.0, 1.0]),
            A_ub=sp.csr_matrix(np.array([[1.0, -1.0]])),
            b_ub=np.array([0.0]),
        )
        r = solve(p)
        assert r.status == "optimal"
        assert r.objective == pytest.approx(3.0)

    def test_abs_value_split(self):
        # min |x| + x over [-2, 2] via x = pos - neg, |x| -> pos + neg.
        p = HorizonProblem(
            n_var=3,
            lo=np.array([-2.0, 0.0, 0.0]),
            hi=np.array([2.0, np.inf, np.inf]),
            c_lin=np.array([1.0, 1.0, 1.0]),
            A_eq=sp.csr_matrix(np.array([[1.0, -1.0, 1.0]])),
            b_eq=np.array([0.0]),
        )
        r = solve(p)
        assert r.status == "optimal"
        assert r.objective == pytest.approx(0.0, abs=1e-9)

    def test_infeasible_box(self):
        p = HorizonProblem(
            n_var=1,
            lo=np.array([0.0]),
            hi=np.array([1.0]),
            c_lin=np.array([1.0]),
            A_ub=sp.csr_matrix(np.array([[-1.0]])),
            b_ub=np.array([-5.0]),  # x >= 5 against x <= 1
        )
        assert solve(p).status == "infeasible"

    def test_unbounded(self):
        p = HorizonProblem(
            n_var=1,
            lo=np.array([-np.inf]),
            hi=np.array([np.inf]),
            c_lin=np.array([1.0]),
        )
        assert solve(p).status == "unbounded"


class TestBuild:
    def test_variable_count_choice2(self, tariff, params):
        # 4 of each of u1/u2/pos/neg/soc/pk2/pk3 plus the two terminal maxes.
        series = flat_series(8)
        p = build_horizon(
            Skeleton(method="choice2", ref_peak2=0.0, ref_peak3=0.0),
            AugmentedState(0.5, 0, 0), 0, 4, params, tariff, series,
        )
        assert p.n_var == 7 * 4 + 2

    def test_std_ref_has_no_terminal_aux(self, tariff, params):
        p = build_horizon(
            Skeleton(method="std_ref"), AugmentedState(0.5, 0, 0), 0, 4,
            params, tariff, flat_series(8),
        )
        assert p.n_var == 7 * 4
        assert "mterm2" not in p.idx

    def test_coverage_error(self, tariff, params):
        with pytest.raises(InputError, match="does not fit"):
            build_horizon(
                Skeleton(method="std_ref"), AugmentedState(0.5, 0, 0), 0, 10,
                params, tariff, flat_series(8),
            )

    def test_negative_scaling_rejected(self, tariff, params):
        sc = PeakScaling(a=lambda t: -1.0, b=lambda t: 1.0)
        with pytest.raises(BuildError, match="nonnegative"):
            build_horizon(
                Skeleton(method="std_ref", scaling=sc), AugmentedState(0.5, 0, 0),
                0, 4, params, tariff, flat_series(8),
            )

    def test_choice_requires_finite_ref_peaks(self, tariff, params):
        for bad in (None, np.inf, -5.0):
            with pytest.raises(BuildError, match="ref_peak"):
                build_horizon(
                    Skeleton(method="choice2", ref_peak2=bad, ref_peak3=0.0),
                    AugmentedState(0.5, 0, 0), 0, 4, params, tariff, flat_series(8),
                )

    def test_tracking_requires_target(self, tariff, params):
        with pytest.raises(BuildError, match="track_target"):
            build_horizon(
                Skeleton(method="track_ref"), AugmentedState(0.5, 0, 0), 0, 4,
                params, tariff, flat_series(8),
            )


class TestSolveContract:
    def test_degenerate_battery_forces_import(self, tariff):
        params = MicrogridParams(bess_power_kw=0.0)
        series = flat_series(8, net=-150.0)
        p = build_horizon(
            Skeleton(method="std_ref"), AugmentedState(0.5, 0, 0), 0, 4,
            params, tariff, series,
        )
        r = solve(p)
        assert r.status == "optimal"
        assert np.array_equal(r.u[:, 1], -series.c[:4])  # exactly -c
        assert np.array_equal(r.u[:, 0], np.zeros(4))

    def test_choice1_infeasible_below_traversal(self, tariff, params):
        # One step cannot move the SOC by more than Pmax*dt/E = 0.07.
        series = flat_series(4)
        p = build_horizon(
            Skeleton(method="choice1", ref_peak2=0.0, ref_peak3=0.0,
                     terminal_soc_eq=0.8),
            AugmentedState(0.5, 0, 0), 0, 1, params, tariff, series,
        )
        assert solve(p).status == "infeasible"

    def test_primal_residual_and_tightness_randomized(self, tariff, params):
        rng = np.random.default_rng(17)
        for k in range(50):
            method = ("std_ref", "choice1", "choice2", "choice3")[k % 4]
            series = rand_series(rng, 16)
            x0 = rand_state(rng, params)
            kw = {}
            if method.startswith("choice"):
                kw["ref_peak2"] = rng.uniform(0, 600)
                kw["ref_peak3"] = rng.uniform(0, kw["ref_peak2"])
            if method == "choice1":
                kw["terminal_soc_eq"] = np.clip(
                    x0.x1 + rng.uniform(-0.2, 0.2), params.soc_min, params.soc_max
                )
            p = build_horizon(
                Skeleton(method=method, **kw), x0, 0, 12, params, tariff, series
            )
            r = solve(p)
            assert r.status == "optimal"
            assert r.primal_residual <= 1e-6
            assert r.tightness <= 1e-6
            assert verify_epigraph_tightness(p, r) == r.tightness

    def test_tightness_zero_input_problem(self, params):
        # Zero rates and balanced net load: doing nothing is optimal.
        tariff = TariffSchedule(energy_rate=0.0, ncdc_rate=0.0, opdc_rate=0.0)
        p = build_horizon(
            Skeleton(method="std_ref"), AugmentedState(0.5, 0, 0), 0, 4,
            params, tariff, flat_series(8, net=0.0),
        )
        r = solve(p)
        assert r.objective == pytest.approx(0.0, abs=1e-12)
        assert r.tightness == pytest.approx(0.0, abs=1e-12)

    def test_determinism_bitwise(self, tariff, params):
        rng = np.random.default_rng(23)
        series = rand_series(rng, 16)
        x0 = AugmentedState(0.42, 120.0, 60.0)
        results = []
        for _ in range(2):
            p = build_horizon(
                Skeleton(method="choice2", ref_peak2=150.0, ref_peak3=80.0),
                x0, 0, 12, params, tariff, series,
            )
            results.append(solve(p))
        a, b = results
        assert np.array_equal(a.u, b.u)
        assert np.array_equal(a.states, b.states)
        assert a.objective == b.objective

    def test_states_follow_true_dynamics(self, tariff, params):
        from mgempc.dynamics import ControlInput, advance_augmented

        rng = np.random.default_rng(29)
        series = rand_series(rng, 16)
        p = build_horizon(
            Skeleton(method="std_ref"), AugmentedState(0.5, 50.0, 20.0), 0, 8,
            params, tariff, series,
        )
        r = solve(p)
        x = AugmentedState(0.5, 50.0, 20.0)
        for k in range(8):
            x = advance_augmented(
                x, ControlInput(r.u[k, 0], r.u[k, 1]), k, params, tariff, check=False
            )
            assert np.array_equal(r.states[k + 1], x.as_array())


class TestTrackingQP:
    def test_matches_clipped_target(self, tariff, params):
        # Interior target with no SOC pressure: optimum is the target itself.
        series = flat_series(8, net=0.0)
        target = np.array([100.0, 50.0, -30.0, 80.0])
        p = build_horizon(
            Skeleton(method="track_ref", track_target=target,
                     track_weights=np.ones(4)),
            AugmentedState(0.5, 0, 0), 0, 4, params, tariff, series,
        )
        r = solve(p)
        assert r.status == "optimal"
        np.testing.assert_allclose(r.u[:, 1], target, atol=1e-6)
        assert r.objective == pytest.approx(0.0, abs=1e-8)

    def test_respects_power_coupling(self, tariff, params):
        # Target beyond the battery rating: import saturates at u1 = Pmax.
        series = flat_series(8, net=0.0)
        target = np.full(4, 900.0)
        p = build_horizon(
            Skeleton(method="track_ref", track_target=target,
                     track_weights=np.ones(4)),
            AugmentedState(0.5, 0, 0), 0, 4, params, tariff, series,
        )
        r = solve(p)
        np.testing.assert_allclose(r.u[:, 1], 700.0, atol=1e-5)
        np.testing.assert_allclose(r.u[:, 0], 700.0, atol=1e-5)

    def test_terminal_equality_row(self, tariff, params):
        # Case-(ii)-style terminal SOC equality on the tracking problem.
        series = flat_series(8, net=0.0)
        target = np.full(4, 200.0)
        p = build_horizon(
            Skeleton(method="track_ref", track_target=target,
                     track_weights=np.ones(4), terminal_soc_eq=0.5),
            AugmentedState(0.5, 0, 0), 0, 4, params, tariff, series,
        )
        r = solve(p)
        assert r.states[-1, 0] == pytest.approx(0.5, abs=1e-7)

    def test_solution_minimizes_unsquared_norm(self, tariff, params):
        # Argmin of the squared weighted norm is the argmin of the norm:
        # the solution must beat feasible perturbations in the plain norm.
        rng = np.random.default_rng(31)
        series = rand_series(rng, 8)
        target = rng.uniform(-100, 400, 6)
        weights = np.where(rng.random(6) < 0.5, 1.784, 1.0)
        p = build_horizon(
            Skeleton(method="track_ref", track_target=target, track_weights=weights),
            AugmentedState(0.5, 0, 0), 0, 6, params, tariff, series,
        )
        r = solve(p)
        best = np.linalg.norm(weights * (r.u[:, 1] - target))
        lo = np.maximum(params.grid_lo, -params.bess_power_kw - series.c[:6])
        hi = np.minimum(params.grid_hi, params.bess_power_kw - series.c[:6])
        for _ in range(25):
            u2 = np.clip(r.u[:, 1] + rng.uniform(-50, 50, 6), lo, hi)
            # keep SOC feasible by rejecting infeasible samples
            soc = 0.5 + np.cumsum(u2 + series.c[:6]) * (0.25 / 2500)
            if np.any(soc < params.soc_min) or np.any(soc > params.soc_max):
                continue
            assert best <= np.linalg.norm(weights * (u2 - target)) + 1e-6


class TestDirectObjective:
    def test_choice_methods_differ_by_max_terms(self, tariff, params):
        rng = np.random.default_rng(37)
        series = rand_series(rng, 8)
        u1 = rng.uniform(-500, 500, 6)
        u2 = u1 - series.c[:6]
        x0 = AugmentedState(0.5, 100.0, 40.0)
        m_std = controller_meta("std_ref", x0, 0, 6, params, tariff, series)
        m_c2 = controller_meta(
            "choice2", x0, 0, 6, params, tariff, series, ref_peak2=250.0, ref_peak3=90.0
        )
        v_std = direct_objective(m_std, u1, u2)
        v_c2 = direct_objective(m_c2, u1, u2)
        # Extra terms: max(peak, ref peak) per charge type, both nonnegative.
        assert v_c2 >= v_std
        pk2 = max(x0.x2, u2.max())
        beta = m_std.beta
        pk3 = max(x0.x3, (u2[beta]).max() if beta.any() else 0.0)
        expected = (
            tariff.ncdc_rate * max(pk2, 250.0) + tariff.opdc_rate * max(pk3, 90.0)
        )
        assert v_c2 - v_std == pytest.approx(expected, rel=1e-12)


GOLDEN_N1 = """\
variables 7
  u1[0] in [-700.0, 700.0] obj 0.0
  u2[0] in [-20000.0, 20000.0] obj 0.025
  pos[0] in [0.0, inf] obj 0.0024999999999999996
  neg[0] in [0.0, inf] obj 0.0024999999999999996
  soc[0] in [0.2, 0.8] obj 0.0
  pk2[0] in [0.0, 20000.0] obj 24.48
  pk3[0] in [0.0, 20000.0] obj 19.19
equalities 3
  1.0*u1[0] + -1.0*u2[0] = -50.0
  1.0*u1[0] + -1.0*pos[0] + 1.0*neg[0] = 0.0
  -0.0001*u1[0] + 1.0*soc[0] = 0.5
inequalities 3
  -1.0*pk2[0] <= 0.0
  1.0*u2[0] + -1.0*pk2[0] <= 0.0
  -1.0*pk3[0] <= 0.0"""


def test_dump_golden(tariff, params):
    series = flat_series(2, net=-50.0)
    p = build_horizon(
        Skeleton(method="std_ref"), AugmentedState(0.5, 0, 0), 0, 1,
        params, tariff, series,
    )
    assert dump_problem(p) == GOLDEN_N1
