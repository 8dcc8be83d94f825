"""Finite-horizon convex programs for the dispatch controllers.

Every controller's horizon problem is assembled here as a dense-ish
sparse LP (or, for the tracking controller, a strictly convex QP in the
import variable).  Running peaks and absolute values are reformulated
exactly: each max becomes an epigraph variable entering the objective
with a nonnegative coefficient, and each ``|u1|`` is split into a
nonnegative pair.  ``verify_epigraph_tightness`` re-evaluates the true
piecewise objective at the solution to guard that exactness.

LPs are solved with HiGHS dual simplex (deterministic, vertex
solutions); the tracking QP with cvxopt's interior-point method at
tightened tolerances.  A small pin-and-propagate presolve handles fully
determined inputs (e.g. a zero-power battery) exactly, bypassing the
solvers where no freedom remains.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .dynamics import (
    AugmentedState,
    ControlInput,
    ExogenousSeries,
    MicrogridParams,
    advance_augmented,
)
from .errors import BuildError, InputError
from .tariff import PeakScaling, TariffSchedule, onpeak_indicator

TIE_BREAK_WEIGHT = 1e-9

LP_METHODS = ("std_ref", "choice1", "choice2", "choice3")
ALL_METHODS = LP_METHODS + ("track_ref",)


@dataclass
class Skeleton:
    """Controller-specific ingredients consumed by ``build_horizon``.

    ``ref_peak2``/``ref_peak3`` are the realized reference running peaks
    at the next step (required by the choice methods), ``track_target``
    and ``track_weights`` the ideal import profile and penalty diagonal
    (tracking method only).
    """

    method: str
    scaling: PeakScaling = field(default_factory=PeakScaling.ones)
    ref_peak2: Optional[float] = None
    ref_peak3: Optional[float] = None
    terminal_soc_eq: Optional[float] = None
    terminal_soc_min: Optional[float] = None
    track_target: Optional[np.ndarray] = None
    track_weights: Optional[np.ndarray] = None
    tie_break: bool = True
    start_hour: float = 0.0


@dataclass
class ProblemMeta:
    """Everything needed to re-evaluate the true objective and rebuild states."""

    method: str
    t0: int
    n_steps: int
    x0: AugmentedState
    c: np.ndarray
    beta: np.ndarray
    rates: np.ndarray
    dt: float
    eta: float
    rnc: float
    rop: float
    a1: float
    b1: float
    aN: float
    bN: float
    ref_peak2: Optional[float]
    ref_peak3: Optional[float]
    track_target: Optional[np.ndarray]
    track_weights: Optional[np.ndarray]
    params: MicrogridParams
    tariff: TariffSchedule
    start_hour: float


@dataclass
class HorizonProblem:
    """A linear (or diagonal-quadratic) program over horizon variables.

    Objective is ``c_lin @ x (+ x @ diag(q_diag) @ x + q_const)``;
    ``c_tie`` is an optional tie-breaking perturbation added only while
    solving, never reported.
    """

    n_var: int
    lo: np.ndarray
    hi: np.ndarray
    c_lin: np.ndarray
    A_eq: Optional[sp.csr_matrix] = None
    b_eq: Optional[np.ndarray] = None
    A_ub: Optional[sp.csr_matrix] = None
    b_ub: Optional[np.ndarray] = None
    c_tie: Optional[np.ndarray] = None
    q_diag: Optional[np.ndarray] = None
    q_const: float = 0.0
    idx: dict = field(default_factory=dict)
    meta: Optional[ProblemMeta] = None

    def __post_init__(self):
        n = self.n_var
        if self.A_eq is None:
            self.A_eq = sp.csr_matrix((0, n))
            self.b_eq = np.zeros(0)
        else:
            self.A_eq = sp.csr_matrix(self.A_eq)
            self.b_eq = np.asarray(self.b_eq, dtype=float)
        if self.A_ub is None:
            self.A_ub = sp.csr_matrix((0, n))
            self.b_ub = np.zeros(0)
        else:
            self.A_ub = sp.csr_matrix(self.A_ub)
            self.b_ub = np.asarray(self.b_ub, dtype=float)
        if self.c_tie is None:
            self.c_tie = np.zeros(n)


@dataclass
class SolveResult:
    """Solver outcome with the contractually required diagnostics.

    ``states`` is the state sequence obtained by running the true
    (max-recursion) dynamics on the returned inputs, so it is consistent
    with the closed-loop advance even where the raw epigraph variables
    carry slack.
    """

    status: str
    x: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None          # (N, 2) columns u1, u2
    states: Optional[np.ndarray] = None     # (N+1, 3)
    objective: Optional[float] = None
    primal_residual: float = np.nan
    tightness: float = np.nan               # relative gap to direct objective
    iterations: int = 0
    message: str = ""


def _variable_names(p: HorizonProblem) -> list:
    names = ["?"] * p.n_var
    for key, loc in p.idx.items():
        if isinstance(loc, slice):
            for j, col in enumerate(range(loc.start, loc.stop)):
                names[col] = f"{key}[{j}]"
        else:
            names[loc] = key
    return names


def build_horizon(
    skel: Skeleton,
    x0: AugmentedState,
    t0: int,
    N: int,
    params: MicrogridParams,
    tariff: TariffSchedule,
    series: ExogenousSeries,
) -> HorizonProblem:
    """Assemble the horizon problem for one controller at one step.

    The feasible set is the battery/grid constraint set over ``N`` steps
    (dynamics, input box, power balance, SOC and peak-state bounds) plus
    the skeleton's terminal constraint; the objective is the
    controller's, with maxes and absolute values reformulated exactly.
    """
    if N < 1:
        raise InputError(f"horizon must be at least 1 step, got {N}")
    if t0 < 0 or t0 + N > len(series):
        raise InputError(
            f"series covers {len(series)} steps, horizon [{t0}, {t0 + N}] does not fit"
        )
    if skel.method not in ALL_METHODS:
        raise BuildError(f"unknown method {skel.method!r}")

    c = np.asarray(series.c[t0 : t0 + N], dtype=float)
    beta = np.array(
        [bool(onpeak_indicator(t0 + k, tariff, skel.start_hour)) for k in range(N)]
    )
    rates = tariff.rate_array(np.arange(t0, t0 + N))
    a1 = float(skel.scaling.a(t0 + 1))
    b1 = float(skel.scaling.b(t0 + 1))
    aN = float(skel.scaling.a(t0 + N))
    bN = float(skel.scaling.b(t0 + N))
    meta = ProblemMeta(
        method=skel.method,
        t0=t0,
        n_steps=N,
        x0=x0,
        c=c,
        beta=beta,
        rates=rates,
        dt=tariff.dt_hours,
        eta=params.eta,
        rnc=tariff.ncdc_rate,
        rop=tariff.opdc_rate,
        a1=a1,
        b1=b1,
        aN=aN,
        bN=bN,
        ref_peak2=skel.ref_peak2,
        ref_peak3=skel.ref_peak3,
        track_target=None,
        track_weights=None,
        params=params,
        tariff=tariff,
        start_hour=skel.start_hour,
    )

    if skel.method == "track_ref":
        return _build_tracking(skel, x0, t0, N, params, tariff, meta)

    if min(aN, bN, a1, b1) < 0:
        raise BuildError(
            "peak scaling coefficients must be nonnegative for an exact "
            f"epigraph reformulation (a={a1},{aN} b={b1},{bN})"
        )
    is_choice = skel.method in ("choice1", "choice2", "choice3")
    if is_choice:
        for name, v in (("ref_peak2", skel.ref_peak2), ("ref_peak3", skel.ref_peak3)):
            if v is None or not np.isfinite(v) or v < 0:
                raise BuildError(
                    f"{skel.method} requires a finite nonnegative {name}, got {v}"
                )

    # Layout: u1 | u2 | pos | neg | soc[1..N] | pk2[1..N] | pk3[1..N] | aux
    iu1 = slice(0, N)
    iu2 = slice(N, 2 * N)
    ipos = slice(2 * N, 3 * N)
    ineg = slice(3 * N, 4 * N)
    ix1 = slice(4 * N, 5 * N)
    ix2 = slice(5 * N, 6 * N)
    ix3 = slice(6 * N, 7 * N)
    n_var = 7 * N + (2 if is_choice else 0)
    im2 = 7 * N if is_choice else None
    im3 = 7 * N + 1 if is_choice else None
    idx = {"u1": iu1, "u2": iu2, "pos": ipos, "neg": ineg, "soc": ix1, "pk2": ix2, "pk3": ix3}
    if is_choice:
        idx["mterm2"] = im2
        idx["mterm3"] = im3

    lo = np.full(n_var, -np.inf)
    hi = np.full(n_var, np.inf)
    lo[iu1], hi[iu1] = -params.bess_power_kw, params.bess_power_kw
    lo[iu2], hi[iu2] = params.grid_lo, params.grid_hi
    lo[ipos], lo[ineg] = 0.0, 0.0
    lo[ix1], hi[ix1] = params.soc_min, params.soc_max
    lo[ix2], hi[ix2] = 0.0, params.grid_hi
    lo[ix3], hi[ix3] = 0.0, params.grid_hi
    if is_choice:
        lo[im2] = a1 * skel.ref_peak2
        lo[im3] = b1 * skel.ref_peak3

    soc_gain = tariff.dt_hours / params.bess_energy_kwh

    # Equalities: power balance, |u1| split, SOC recursion, terminal SOC.
    rows, cols, vals = [], [], []

    def add_eq(r, cs, vs):
        rows.extend([r] * len(cs))
        cols.extend(cs)
        vals.extend(vs)

    for k in range(N):
        add_eq(k, [k, N + k], [1.0, -1.0])                      # u1 - u2 = c
        add_eq(N + k, [k, 2 * N + k, 3 * N + k], [1.0, -1.0, 1.0])  # u1 - p + n = 0
        if k == 0:
            add_eq(2 * N, [4 * N, 0], [1.0, -soc_gain])
        else:
            add_eq(2 * N + k, [4 * N + k, 4 * N + k - 1, k], [1.0, -1.0, -soc_gain])
    beq = np.concatenate([c, np.zeros(N), np.r_[x0.x1, np.zeros(N - 1)]])
    n_eq = 3 * N
    if skel.terminal_soc_eq is not None:
        add_eq(n_eq, [5 * N - 1], [1.0])
        beq = np.append(beq, skel.terminal_soc_eq)
        n_eq += 1
    A_eq = sp.csr_matrix(
        (vals, (rows, cols)), shape=(n_eq, n_var)
    )

    # Inequalities: peak-state chains (epigraph of the running max),
    # terminal max auxiliaries, optional terminal SOC floor.
    urows, ucols, uvals, bub = [], [], [], []
    r = 0

    def add_ub(cs, vs, b):
        nonlocal r
        urows.extend([r] * len(cs))
        ucols.extend(cs)
        uvals.extend(vs)
        bub.append(b)
        r += 1

    add_ub([5 * N], [-1.0], -x0.x2)                 # pk2[1] >= current peak
    for k in range(1, N):
        add_ub([5 * N + k - 1, 5 * N + k], [1.0, -1.0], 0.0)
    for k in range(N):
        add_ub([N + k, 5 * N + k], [1.0, -1.0], 0.0)  # pk2[k+1] >= u2[k]
    add_ub([6 * N], [-1.0], -x0.x3)
    for k in range(1, N):
        add_ub([6 * N + k - 1, 6 * N + k], [1.0, -1.0], 0.0)
    for k in range(N):
        if beta[k]:
            add_ub([N + k, 6 * N + k], [1.0, -1.0], 0.0)
    if is_choice:
        if skel.method == "choice3":
            add_ub([5 * N, im2], [a1, -1.0], 0.0)    # mterm2 >= a1 * pk2[1]
            add_ub([6 * N, im3], [b1, -1.0], 0.0)
        else:
            add_ub([6 * N - 1, im2], [aN, -1.0], 0.0)  # mterm2 >= aN * pk2[N]
            add_ub([7 * N - 1, im3], [bN, -1.0], 0.0)
    if skel.terminal_soc_min is not None:
        add_ub([5 * N - 1], [-1.0], -skel.terminal_soc_min)
    A_ub = sp.csr_matrix((uvals, (urows, ucols)), shape=(r, n_var))

    c_lin = np.zeros(n_var)
    c_lin[iu2] = rates * tariff.dt_hours
    loss_coeff = rates * tariff.dt_hours * 0.5 * (1.0 - params.eta)
    c_lin[ipos] = loss_coeff
    c_lin[ineg] = loss_coeff
    c_lin[6 * N - 1] += tariff.ncdc_rate * aN
    c_lin[7 * N - 1] += tariff.opdc_rate * bN
    if is_choice:
        c_lin[im2] = tariff.ncdc_rate
        c_lin[im3] = tariff.opdc_rate

    c_tie = np.zeros(n_var)
    if skel.tie_break:
        c_tie[ipos] = TIE_BREAK_WEIGHT
        c_tie[ineg] = TIE_BREAK_WEIGHT

    return HorizonProblem(
        n_var=n_var,
        lo=lo,
        hi=hi,
        c_lin=c_lin,
        A_eq=A_eq,
        b_eq=beq,
        A_ub=A_ub,
        b_ub=np.asarray(bub),
        c_tie=c_tie,
        idx=idx,
        meta=meta,
    )


def _build_tracking(skel, x0, t0, N, params, tariff, meta) -> HorizonProblem:
    """Strictly convex QP in the import trajectory only.

    Power balance pins ``u1 = u2 + c``, so the battery rating folds into
    the import bounds and the SOC bounds become cumulative-sum rows.
    The peak states do not enter the tracking objective and their box
    constraints are implied by the import bounds, so they are omitted.
    """
    if skel.track_target is None or skel.track_weights is None:
        raise BuildError("tracking method requires track_target and track_weights")
    target = np.asarray(skel.track_target, dtype=float)
    weights = np.asarray(skel.track_weights, dtype=float)
    if target.shape != (N,) or weights.shape != (N,):
        raise BuildError("track_target and track_weights must have one entry per step")
    if np.any(weights <= 0):
        raise BuildError("tracking weights must be positive")
    meta.track_target = target
    meta.track_weights = weights

    c = meta.c
    lo = np.maximum(params.grid_lo, -params.bess_power_kw - c)
    hi = np.minimum(params.grid_hi, params.bess_power_kw - c)
    soc_gain = tariff.dt_hours / params.bess_energy_kwh

    # SOC after step k: x0 + soc_gain * cumsum(u2 + c)[k].
    tri = np.tril(np.ones((N, N))) * soc_gain
    csum = np.cumsum(c) * soc_gain
    A_ub = np.vstack([tri, -tri])
    b_ub = np.concatenate(
        [params.soc_max - x0.x1 - csum, -(params.soc_min - x0.x1 - csum)]
    )
    A_eq = None
    b_eq = None
    if skel.terminal_soc_eq is not None:
        A_eq = sp.csr_matrix(tri[-1:, :])
        b_eq = np.array([skel.terminal_soc_eq - x0.x1 - csum[-1]])
    if skel.terminal_soc_min is not None:
        A_ub = np.vstack([A_ub, -tri[-1:, :]])
        b_ub = np.append(b_ub, -(skel.terminal_soc_min - x0.x1 - csum[-1]))

    w2 = weights**2
    return HorizonProblem(
        n_var=N,
        lo=lo,
        hi=hi,
        c_lin=-2.0 * w2 * target,
        A_eq=A_eq,
        b_eq=b_eq,
        A_ub=sp.csr_matrix(A_ub),
        b_ub=b_ub,
        q_diag=w2,
        q_const=float(np.sum(w2 * target**2)),
        idx={"u2": slice(0, N)},
        meta=meta,
    )


# ----------------------------------------------------------------------
# Solving


def _pin_fixed(p: HorizonProblem, atol: float = 1e-9):
    """Pin lo==hi variables and propagate through single-free equality rows.

    Returns (fixed mask, pinned values, feasible flag).  Exact arithmetic
    on the pinned values keeps fully determined trajectories (zero-power
    battery) bit-reproducible without a solver round-trip.
    """
    lo, hi = p.lo, p.hi
    if np.any(lo > hi):
        return None, None, False
    fixed = lo == hi
    x = np.where(fixed, lo, 0.0)
    if not fixed.any():
        return fixed, x, True
    A = p.A_eq.tocsr()
    indptr, indices, data = A.indptr, A.indices, A.data
    changed = True
    while changed:
        changed = False
        for i in range(A.shape[0]):
            js = indices[indptr[i] : indptr[i + 1]]
            vs = data[indptr[i] : indptr[i + 1]]
            free_pos = [m for m in range(len(js)) if not fixed[js[m]]]
            if len(free_pos) != 1:
                continue
            m = free_pos[0]
            acc = p.b_eq[i]
            for mm in range(len(js)):
                if mm != m:
                    acc -= vs[mm] * x[js[mm]]
            val = acc / vs[m]
            j = js[m]
            if val < lo[j] - atol or val > hi[j] + atol:
                return None, None, False
            x[j] = val
            fixed[j] = True
            changed = True
    return fixed, x, True


def _reduced_rows(A, b, fixed, x, kind, atol=1e-9):
    """Drop fixed columns from constraint rows, checking emptied rows."""
    A = A.tocsr()
    if A.shape[0] == 0:
        return A, b, True
    shift = A[:, fixed] @ x[fixed]
    b2 = b - shift
    Af = A[:, ~fixed].tocsr()
    keep = np.diff(Af.indptr) > 0
    dead = ~keep
    if dead.any():
        resid = b2[dead]
        if kind == "eq" and np.any(np.abs(resid) > atol):
            return None, None, False
        if kind == "ub" and np.any(resid < -atol):
            return None, None, False
    return Af[keep], b2[keep], True


_HIGHS_STATUS = {0: "optimal", 2: "infeasible", 3: "unbounded"}


def solve(p: HorizonProblem) -> SolveResult:
    """Solve a horizon problem; deterministic for identical inputs.

    On ``optimal`` the result satisfies the accuracy contract: max primal
    residual at most 1e-6 and reported objective matching a direct
    re-evaluation of the true piecewise objective to 1e-6 relative.
    """
    fixed, x_pin, ok = _pin_fixed(p)
    if not ok:
        return SolveResult(status="infeasible", message="presolve: bound conflict")

    free = ~fixed
    nfree = int(free.sum())
    iterations = 0
    if nfree == 0:
        x = x_pin
        if _max_violation(p, x) > 1e-6:
            return SolveResult(
                status="infeasible", message="presolve: fully pinned point violates rows"
            )
    else:
        if fixed.any():
            Ae, be, ok = _reduced_rows(p.A_eq, p.b_eq, fixed, x_pin, "eq")
            if not ok:
                return SolveResult(status="infeasible", message="presolve: equality conflict")
            Au, bu, ok = _reduced_rows(p.A_ub, p.b_ub, fixed, x_pin, "ub")
            if not ok:
                return SolveResult(status="infeasible", message="presolve: inequality conflict")
        else:
            Ae, be = p.A_eq, p.b_eq
            Au, bu = p.A_ub, p.b_ub
        if p.q_diag is None:
            c_eff = (p.c_lin + p.c_tie)[free]
            res = linprog(
                c_eff,
                A_ub=Au if Au.shape[0] else None,
                b_ub=bu if Au.shape[0] else None,
                A_eq=Ae if Ae.shape[0] else None,
                b_eq=be if Ae.shape[0] else None,
                bounds=np.column_stack([p.lo[free], p.hi[free]]),
                method="highs-ds",
            )
            status = _HIGHS_STATUS.get(res.status, "numerical-failure")
            if status != "optimal":
                return SolveResult(status=status, message=str(res.message), iterations=getattr(res, "nit", 0))
            x = x_pin.copy()
            x[free] = res.x
            iterations = int(getattr(res, "nit", 0))
        else:
            xf, status, iterations, msg = _solve_qp(p, free, fixed, x_pin, Ae, be, Au, bu)
            if status != "optimal":
                return SolveResult(status=status, message=msg, iterations=iterations)
            x = x_pin.copy()
            x[free] = xf

    residual = _max_violation(p, x)
    objective = float(p.c_lin @ x) + p.q_const
    if p.q_diag is not None:
        objective += float(x @ (p.q_diag * x))
    result = SolveResult(
        status="optimal",
        x=x,
        objective=objective,
        primal_residual=residual,
        iterations=iterations,
    )
    if p.meta is not None:
        _attach_trajectory(p, result)
        result.tightness = verify_epigraph_tightness(p, result)
    return result


def _solve_qp(p, free, fixed, x_pin, Ae, be, Au, bu):
    """cvxopt interior-point solve of the reduced diagonal QP."""
    from cvxopt import matrix, solvers

    nf = int(free.sum())
    P = matrix(np.diag(2.0 * p.q_diag[free]))
    q = matrix(p.c_lin[free])
    G = np.vstack([Au.toarray(), np.eye(nf), -np.eye(nf)])
    h = np.concatenate([bu, p.hi[free], -p.lo[free]])
    kwargs = {}
    if Ae.shape[0]:
        kwargs["A"] = matrix(Ae.toarray())
        kwargs["b"] = matrix(be)
    opts = {
        "show_progress": False,
        "abstol": 1e-9,
        "reltol": 1e-9,
        "feastol": 1e-9,
        "maxiters": 200,
    }
    sol = solvers.qp(P, q, matrix(G), matrix(h), options=opts, **kwargs)
    iters = int(sol.get("iterations", 0))
    if sol["status"] == "optimal":
        return np.array(sol["x"]).ravel(), "optimal", iters, ""
    if sol["status"] == "primal infeasible":
        return None, "infeasible", iters, "cvxopt: primal infeasible"
    return None, "numerical-failure", iters, f"cvxopt status {sol['status']}"


def _max_violation(p: HorizonProblem, x: np.ndarray) -> float:
    v = 0.0
    if p.A_eq.shape[0]:
        v = max(v, float(np.max(np.abs(p.A_eq @ x - p.b_eq))))
    if p.A_ub.shape[0]:
        v = max(v, float(np.max(p.A_ub @ x - p.b_ub, initial=0.0)))
    v = max(v, float(np.max(p.lo - x, initial=0.0)))
    v = max(v, float(np.max(x - p.hi, initial=0.0)))
    return v


def _attach_trajectory(p: HorizonProblem, result: SolveResult):
    meta = p.meta
    if meta.method == "track_ref":
        u2 = result.x[p.idx["u2"]]
        u1 = u2 + meta.c
    else:
        u1 = result.x[p.idx["u1"]]
        u2 = result.x[p.idx["u2"]]
    result.u = np.column_stack([u1, u2])
    states = np.empty((meta.n_steps + 1, 3))
    x = meta.x0
    states[0] = x.as_array()
    for k in range(meta.n_steps):
        x = advance_augmented(
            x,
            ControlInput(float(u1[k]), float(u2[k])),
            meta.t0 + k,
            meta.params,
            meta.tariff,
            meta.start_hour,
            check=False,
        )
        states[k + 1] = x.as_array()
    result.states = states


def direct_objective(meta: ProblemMeta, u1: np.ndarray, u2: np.ndarray) -> float:
    """True controller objective (genuine max/abs) at an input trajectory."""
    energy = float(
        np.sum(meta.rates * meta.dt * (u2 + 0.5 * (1.0 - meta.eta) * np.abs(u1)))
    )
    if meta.method == "track_ref":
        w2 = meta.track_weights**2
        return float(np.sum(w2 * (u2 - meta.track_target) ** 2))
    pk2 = meta.x0.x2
    pk3 = meta.x0.x3
    pk2_first = pk3_first = None
    for k in range(meta.n_steps):
        pk2 = max(pk2, u2[k])
        if meta.beta[k]:
            pk3 = max(pk3, u2[k])
        if k == 0:
            pk2_first, pk3_first = pk2, pk3
    if meta.method == "std_ref":
        return energy + meta.rnc * meta.aN * pk2 + meta.rop * meta.bN * pk3
    if meta.method == "choice3":
        m2 = max(meta.a1 * pk2_first, meta.a1 * meta.ref_peak2)
        m3 = max(meta.b1 * pk3_first, meta.b1 * meta.ref_peak3)
    else:  # choice1 / choice2
        m2 = max(meta.aN * pk2, meta.a1 * meta.ref_peak2)
        m3 = max(meta.bN * pk3, meta.b1 * meta.ref_peak3)
    return (
        energy
        + meta.rnc * (meta.aN * pk2 + m2)
        + meta.rop * (meta.bN * pk3 + m3)
    )


def verify_epigraph_tightness(p: HorizonProblem, result: SolveResult) -> float:
    """Relative gap between the reported objective and a direct re-evaluation."""
    if result.status != "optimal":
        raise InputError("tightness check requires an optimal result")
    direct = direct_objective(p.meta, result.u[:, 0], result.u[:, 1])
    return abs(direct - result.objective) / max(1.0, abs(result.objective))


def controller_meta(
    method: str,
    x0,
    t0: int,
    N: int,
    params,
    tariff,
    series,
    scaling=None,
    ref_peak2=None,
    ref_peak3=None,
    start_hour: float = 0.0,
) -> ProblemMeta:
    """Objective metadata alone, for direct evaluations without assembling an LP."""
    if scaling is None:
        scaling = PeakScaling.ones()
    beta = np.array(
        [bool(onpeak_indicator(t0 + k, tariff, start_hour)) for k in range(N)]
    )
    return ProblemMeta(
        method=method,
        t0=t0,
        n_steps=N,
        x0=x0,
        c=np.asarray(series.c[t0 : t0 + N], dtype=float),
        beta=beta,
        rates=tariff.rate_array(np.arange(t0, t0 + N)),
        dt=tariff.dt_hours,
        eta=params.eta,
        rnc=tariff.ncdc_rate,
        rop=tariff.opdc_rate,
        a1=float(scaling.a(t0 + 1)),
        b1=float(scaling.b(t0 + 1)),
        aN=float(scaling.a(t0 + N)),
        bN=float(scaling.b(t0 + N)),
        ref_peak2=ref_peak2,
        ref_peak3=ref_peak3,
        track_target=None,
        track_weights=None,
        params=params,
        tariff=tariff,
        start_hour=start_hour,
    )


def _fmt(v) -> str:
    return repr(float(v) + 0.0)


def dump_problem(p: HorizonProblem) -> str:
    """Readable listing of variables, bounds, rows, and objective."""
    names = _variable_names(p)
    lines = [f"variables {p.n_var}"]
    for j in range(p.n_var):
        lines.append(
            f"  {names[j]} in [{_fmt(p.lo[j])}, {_fmt(p.hi[j])}] obj {_fmt(p.c_lin[j])}"
        )
    if p.q_diag is not None:
        lines.append("quadratic diagonal")
        for j in range(p.n_var):
            lines.append(f"  {names[j]}^2 * {_fmt(p.q_diag[j])}")
    lines.append(f"equalities {p.A_eq.shape[0]}")
    A = p.A_eq.tocsr()
    for i in range(A.shape[0]):
        terms = " + ".join(
            f"{_fmt(A.data[m])}*{names[A.indices[m]]}"
            for m in range(A.indptr[i], A.indptr[i + 1])
        )
        lines.append(f"  {terms} = {_fmt(p.b_eq[i])}")
    lines.append(f"inequalities {p.A_ub.shape[0]}")
    A = p.A_ub.tocsr()
    for i in range(A.shape[0]):
        terms = " + ".join(
            f"{_fmt(A.data[m])}*{names[A.indices[m]]}"
            for m in range(A.indptr[i], A.indptr[i + 1])
        )
        lines.append(f"  {terms} <= {_fmt(p.b_ub[i])}")
    return "\n".join(lines)
