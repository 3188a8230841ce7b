"""Age-threshold random access with a contention minislot: simulation and analysis."""

from .analytic import (
    ActiveCountPmf,
    AgeDistribution,
    DriftAnalysis,
    Regime,
    active_count_pmf,
    age_distribution,
    asymptotic_age,
    asymptotic_age_from_load,
    drift_f,
    instantaneous_throughput_G,
    max_throughput_and_age_bound,
    pm_ratio,
    q0_limit,
    regime_analysis,
    spectral_break_even,
    spectral_ratio,
    throughput_asymptotic,
)
from .errors import (
    AccumulatorOverflowError,
    DomainError,
    MistaError,
    NoFeasiblePoint,
    NoRootError,
    ParameterError,
    SizeError,
    SolverError,
)
from .optimizer import optimize_age, optimize_all, sweep
from .oracle import enumerate_recurrent_types, exact_stationary, pivot_ratio_check
from .protocol import (
    NetworkState,
    OutcomeKind,
    Policy,
    PolicyParams,
    ScaledParams,
    SlotOutcome,
    active_set,
    mumista_step,
    step,
    success_probability,
)
from .sim import RunConfig, RunMetrics, empirical_active_pmf, run, run_replicated

__version__ = "0.1.0"
