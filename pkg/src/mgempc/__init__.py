"""Economic MPC microgrid dispatch with demand-charge peak states.

A library and CLI for receding-horizon battery dispatch against a tariff
with monthly and on-peak demand charges.  Running import peaks are
carried as states so the bill decomposes into additive stage costs; two
baseline controllers and three proposed variants are co-simulated, and
the per-step and finite-window cost guarantees of the proposed variants
against the baseline are certified numerically on the logs.
"""

from .controllers import (
    ControllerConfig,
    ReferenceInfo,
    build_controller_problem,
    ideal_import_profile,
    min_traversal_horizon,
    required_h_increment,
)
from .convex import (
    HorizonProblem,
    Skeleton,
    SolveResult,
    build_horizon,
    dump_problem,
    solve,
    verify_epigraph_tightness,
)
from .dynamics import (
    AugmentedState,
    ControlInput,
    ExogenousSeries,
    MicrogridParams,
    advance_augmented,
    feasible_input_set,
    terminal_control_law,
)
from .errors import (
    BuildError,
    DataError,
    DynamicsError,
    InfeasibleError,
    InputError,
    SolveError,
)
from .guarantees import (
    GuaranteeReport,
    build_report,
    certify_assumptions,
    check_average_bound,
    check_shifted_feasibility,
    check_stepwise_decrease,
    sample_shifted_feasibility,
)
from .harness import (
    ScenarioSpec,
    SimulationLog,
    oracle_full_window,
    run_closed_loop,
    run_single_method,
    write_cost_summary,
    write_log_csv,
)
from .tariff import (
    BillingWindow,
    CostBreakdown,
    PeakScaling,
    TariffSchedule,
    decompose_check,
    monthly_cost,
    onpeak_indicator,
    stage_cost,
)

__version__ = "0.1.0"
