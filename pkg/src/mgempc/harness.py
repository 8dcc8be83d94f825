"""Closed-loop receding-horizon co-simulation.

At every step the baseline controller solves first and its first input
is applied to the baseline system; the proposed controller then solves
from its own state using the baseline's freshly realized peaks, and its
first input is applied.  Forecasts are perfect, so each solve's first
predicted state coincides with the realized successor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Optional

import numpy as np

from .controllers import (
    CHOICE_METHODS,
    REFERENCE_METHODS,
    ControllerConfig,
    ReferenceInfo,
    build_controller_problem,
)
from .convex import Skeleton, SolveResult, build_horizon, solve
from .dynamics import (
    AugmentedState,
    ControlInput,
    ExogenousSeries,
    MicrogridParams,
    advance_augmented,
)
from .errors import InfeasibleError, InputError
from .tariff import (
    BillingWindow,
    CostBreakdown,
    PeakScaling,
    TariffSchedule,
    monthly_cost,
    stage_cost,
)

LOG_COLUMNS = (
    "timestamp,pv,load,ref_u1,ref_u2,ref_soc,ref_x2,ref_x3,"
    "u1,u2,soc,x2,x3,V_opt,stage_cost,ref_stage_cost"
)


@dataclass
class ScenarioSpec:
    """One complete simulation setup: data, window, and controller pair.

    ``proposed`` may be None, in which case only the reference method is
    simulated.  Data must cover the billing window plus one horizon of
    lookahead; running peaks never reset inside a prediction that crosses
    the window end.
    """

    params: MicrogridParams
    tariff: TariffSchedule
    series: ExogenousSeries
    window: BillingWindow
    reference: ControllerConfig
    proposed: Optional[ControllerConfig] = None
    start_hour: float = 0.0
    start_timestamp: str = "2019-01-01T00:00"
    tie_break: bool = True

    def __post_init__(self):
        if self.reference.method not in REFERENCE_METHODS:
            raise InputError(
                f"reference controller must be one of {REFERENCE_METHODS}, "
                f"got {self.reference.method!r}"
            )
        if self.proposed is not None and self.proposed.method not in CHOICE_METHODS:
            raise InputError(
                f"proposed controller must be one of {CHOICE_METHODS}, "
                f"got {self.proposed.method!r}"
            )
        horizons = [self.reference.horizon_N]
        self.reference.validate_horizon(self.params, self.tariff.dt_hours)
        if self.proposed is not None:
            self.proposed.validate_horizon(self.params, self.tariff.dt_hours)
            horizons.append(self.proposed.horizon_N)
        need = self.window.start_step + self.window.length_T + max(horizons)
        if len(self.series) < need:
            raise InputError(
                f"series has {len(self.series)} steps, scenario needs {need} "
                "(window plus one horizon of lookahead)"
            )

    @property
    def scaling(self) -> PeakScaling:
        cfg = self.proposed if self.proposed is not None else self.reference
        return cfg.scaling

    def initial_state(self) -> AugmentedState:
        return AugmentedState(self.params.soc_init, 0.0, 0.0)


@dataclass
class SystemTrace:
    """Realized trajectory plus per-solve diagnostics for one system."""

    states: np.ndarray      # (T+1, 3)
    u: np.ndarray           # (T, 2)
    V: np.ndarray           # (T,) optimal value of each solve
    stage: np.ndarray       # (T,) realized stage cost
    open_u: np.ndarray      # (T, N, 2) open-loop optimal input sequences
    primal_res: np.ndarray  # (T,)
    tightness: np.ndarray   # (T,)
    iterations: np.ndarray  # (T,)

    @classmethod
    def empty(cls, T: int, N: int) -> "SystemTrace":
        return cls(
            states=np.zeros((T + 1, 3)),
            u=np.zeros((T, 2)),
            V=np.zeros(T),
            stage=np.zeros(T),
            open_u=np.zeros((T, N, 2)),
            primal_res=np.zeros(T),
            tightness=np.zeros(T),
            iterations=np.zeros(T, dtype=int),
        )


@dataclass
class SimulationLog:
    """Everything recorded during a closed-loop run.

    ``sys`` holds the simulated (proposed, or single) system; ``ref`` is
    the baseline trace in a co-simulation and None otherwise.
    """

    spec: ScenarioSpec
    method: str
    sys: SystemTrace
    ref: Optional[SystemTrace] = None
    ref_method: Optional[str] = None

    @property
    def T(self) -> int:
        return self.spec.window.length_T

    def cost(self) -> CostBreakdown:
        return monthly_cost(
            self.sys.u[:, 0], self.sys.u[:, 1], self.spec.window,
            self.spec.tariff, self.spec.params.eta,
        )

    def ref_cost(self) -> CostBreakdown:
        if self.ref is None:
            raise InputError("log has no reference trace")
        return monthly_cost(
            self.ref.u[:, 0], self.ref.u[:, 1], self.spec.window,
            self.spec.tariff, self.spec.params.eta,
        )


def _solve_or_abort(problem, label: str, t: int) -> SolveResult:
    result = solve(problem)
    if result.status != "optimal":
        raise InfeasibleError(
            f"{label} solve failed at step {t}: status={result.status} "
            f"message={result.message!r}"
        )
    return result


def _record(trace: SystemTrace, i: int, result: SolveResult):
    trace.u[i] = result.u[0]
    trace.V[i] = result.objective
    trace.open_u[i] = result.u
    trace.primal_res[i] = result.primal_residual
    trace.tightness[i] = result.tightness
    trace.iterations[i] = result.iterations


def run_closed_loop(spec: ScenarioSpec) -> SimulationLog:
    """Co-simulate the baseline and the proposed controller over the window."""
    if spec.proposed is None:
        raise InputError("run_closed_loop needs a proposed controller; "
                         "use run_single_method for baselines")
    T = spec.window.length_T
    t0 = spec.window.start_step
    ref_trace = SystemTrace.empty(T, spec.reference.horizon_N)
    sys_trace = SystemTrace.empty(T, spec.proposed.horizon_N)
    x_ref = spec.initial_state()
    x = spec.initial_state()
    ref_trace.states[0] = x_ref.as_array()
    sys_trace.states[0] = x.as_array()
    scaling = spec.scaling
    eta = spec.params.eta

    for i in range(T):
        t = t0 + i
        prob_r = build_controller_problem(
            spec.reference, x_ref, t, spec.params, spec.tariff, spec.series,
            start_hour=spec.start_hour, tie_break=spec.tie_break,
        )
        res_r = _solve_or_abort(prob_r, spec.reference.method, t)
        _record(ref_trace, i, res_r)
        u_r = ControlInput(float(res_r.u[0, 0]), float(res_r.u[0, 1]))
        x_ref_next = advance_augmented(
            x_ref, u_r, t, spec.params, spec.tariff, spec.start_hour
        )
        info = ReferenceInfo(x_ref, u_r, x_ref_next)

        prob_p = build_controller_problem(
            spec.proposed, x, t, spec.params, spec.tariff, spec.series,
            ref=info, start_hour=spec.start_hour, tie_break=spec.tie_break,
        )
        res_p = _solve_or_abort(prob_p, spec.proposed.method, t)
        _record(sys_trace, i, res_p)
        u = ControlInput(float(res_p.u[0, 0]), float(res_p.u[0, 1]))
        x_next = advance_augmented(x, u, t, spec.params, spec.tariff, spec.start_hour)

        ref_trace.stage[i] = stage_cost(x_ref, x_ref_next, u_r, t, spec.tariff, scaling, eta)
        sys_trace.stage[i] = stage_cost(x, x_next, u, t, spec.tariff, scaling, eta)
        x_ref, x = x_ref_next, x_next
        ref_trace.states[i + 1] = x_ref.as_array()
        sys_trace.states[i + 1] = x.as_array()

    return SimulationLog(
        spec=spec,
        method=spec.proposed.method,
        sys=sys_trace,
        ref=ref_trace,
        ref_method=spec.reference.method,
    )


def run_single_method(spec: ScenarioSpec) -> SimulationLog:
    """Simulate the reference controller alone over the window."""
    T = spec.window.length_T
    t0 = spec.window.start_step
    trace = SystemTrace.empty(T, spec.reference.horizon_N)
    x = spec.initial_state()
    trace.states[0] = x.as_array()
    scaling = spec.reference.scaling
    eta = spec.params.eta
    for i in range(T):
        t = t0 + i
        prob = build_controller_problem(
            spec.reference, x, t, spec.params, spec.tariff, spec.series,
            start_hour=spec.start_hour, tie_break=spec.tie_break,
        )
        res = _solve_or_abort(prob, spec.reference.method, t)
        _record(trace, i, res)
        u = ControlInput(float(res.u[0, 0]), float(res.u[0, 1]))
        x_next = advance_augmented(x, u, t, spec.params, spec.tariff, spec.start_hour)
        trace.stage[i] = stage_cost(x, x_next, u, t, spec.tariff, scaling, eta)
        x = x_next
        trace.states[i + 1] = x.as_array()
    return SimulationLog(spec=spec, method=spec.reference.method, sys=trace)


def oracle_full_window(spec: ScenarioSpec):
    """One-shot perfect-foresight optimization of the whole billing window.

    Minimizes the exact bill (clamped demand charges via the peak states
    started at zero), so its cost lower-bounds every receding-horizon
    policy's closed-loop cost.  Returns the cost breakdown and the solve.
    """
    T = spec.window.length_T
    skel = Skeleton(
        method="std_ref",
        scaling=PeakScaling.ones(),
        tie_break=spec.tie_break,
        start_hour=spec.start_hour,
    )
    prob = build_horizon(
        skel, spec.initial_state(), spec.window.start_step, T,
        spec.params, spec.tariff, spec.series,
    )
    result = _solve_or_abort(prob, "oracle", spec.window.start_step)
    breakdown = monthly_cost(
        result.u[:, 0], result.u[:, 1], spec.window, spec.tariff, spec.params.eta
    )
    return breakdown, result


def _timestamps(spec: ScenarioSpec):
    start = datetime.fromisoformat(spec.start_timestamp)
    step = timedelta(hours=spec.tariff.dt_hours)
    return [start + i * step for i in range(spec.window.length_T)]


def _f(v) -> str:
    # repr of the builtin float round-trips exactly
    return repr(float(v))


def write_log_csv(log: SimulationLog, path):
    """One row per step; empty reference columns for single-method runs."""
    t0 = log.spec.window.start_step
    pv = log.spec.series.pv_kw
    load = log.spec.series.load_kw
    times = _timestamps(log.spec)
    with open(path, "w") as f:
        f.write(LOG_COLUMNS + "\n")
        for i in range(log.T):
            if log.ref is not None:
                ref_part = [
                    _f(log.ref.u[i, 0]), _f(log.ref.u[i, 1]),
                    _f(log.ref.states[i + 1, 0]), _f(log.ref.states[i + 1, 1]),
                    _f(log.ref.states[i + 1, 2]),
                ]
                ref_stage = _f(log.ref.stage[i])
            else:
                ref_part = ["", "", "", "", ""]
                ref_stage = ""
            row = [times[i].isoformat(), _f(pv[t0 + i]), _f(load[t0 + i])]
            row += ref_part
            row += [
                _f(log.sys.u[i, 0]), _f(log.sys.u[i, 1]),
                _f(log.sys.states[i + 1, 0]), _f(log.sys.states[i + 1, 1]),
                _f(log.sys.states[i + 1, 2]),
                _f(log.sys.V[i]), _f(log.sys.stage[i]), ref_stage,
            ]
            f.write(",".join(row) + "\n")


def write_cost_summary(costs: dict, path):
    """JSON record of cost breakdowns keyed by system label."""
    payload = {
        label: bd.as_dict() if isinstance(bd, CostBreakdown) else bd
        for label, bd in costs.items()
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
