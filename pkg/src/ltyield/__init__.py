"""Linear-threshold yield management: simulation, regret benchmarks, and
Markov-chain / dynamic-programming analytics for two- and K-class
continuous-time accept/reject problems."""

from .dp import ValueGrid, build_eo, compute_optimal_thresholds, extrapolation_slope
from .dtmc import (
    DtmcModel,
    GHistogram,
    StationaryDist,
    dm1_arrival_matrix,
    erlang_pdf,
    estimate_g,
    kernel_entry,
    md1_departure_matrix,
    poisson_pmf,
    poisson_tail,
    proposition1_bound,
    restricted_minus_kernel,
    restricted_plus_kernel,
    row_mass_outside,
    simulate_chain,
    simulate_chain_finals,
    stationary,
)
from .excursion import (
    DlpSolution,
    ExcursionStats,
    crossing_tail_bound,
    excursion_stats,
    simulate_crossing_frequency,
    simulate_excursions,
    solve_dlp,
    solve_nu,
)
from .hindsight import HindsightSolution, hindsight_optimal
from .model import (
    ArrivalRealization,
    ModelParams,
    SeedSpec,
    count_remaining,
    sample_arrivals,
)
from .policies import (
    AcceptAll,
    BetaLT,
    ExtrapolatedOptimal,
    PolicySpec,
    SimOutcome,
    ThresholdTable,
    VectorBetaLT,
    run_accept_all,
    run_beta_lt,
    run_policy,
    run_threshold_table,
    run_vector_beta_lt,
)
from .regret import (
    RegretEstimate,
    SweepCell,
    SweepGrid,
    estimate_regret,
    parse_table,
    run_sweep,
    tabulate,
)

__version__ = "0.1.0"
