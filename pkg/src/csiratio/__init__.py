"""CSI-ratio bistatic Doppler sensing toolkit.

Simulation of cross-antenna CSI ratios under clock asynchronism, exact and
approximated Cramer-Rao bounds for Doppler estimation, sensing-symbol
schedule design for noise- and interference-limited regimes, and a
maximum-likelihood estimator with Monte Carlo validation.
"""

__version__ = "0.1.0"

from .analysis import (
    AngleExtremes,
    DopplerPattern,
    LobeSumResult,
    RegimeResult,
    approx_crb_kernel,
    corollary2_extremes,
    corollary3_regime,
    crb_doppler_approx,
    doppler_pattern,
    equivalent_static_angle,
    export_curves,
    lemma2_residual_bound,
    lemma2_sum,
    mainlobe_width,
    pattern_report,
)
from .crb import (
    CrbResult,
    EpsilonTerms,
    ParamVector,
    chi_jacobian,
    crb_doppler_exact,
    epsilon_terms,
    fim,
    h_closed_form,
    h_from_fim,
)
from .errors import (
    ClosedFormMismatch,
    DegenerateStatics,
    GratingLobes,
    InvalidParams,
    InvalidSize,
    NonPositiveDenominator,
    OutOfDomain,
    PreconditionWarning,
    RegimeUndefined,
    ScheduleFormatError,
    SingularUpdate,
    ZeroDenominator,
)
from .harness import (
    MonteCarloResult,
    ScheduleSpec,
    SweepConfig,
    SweepReport,
    SweepRow,
    cli,
    export,
    load_report,
    run_monte_carlo,
    sweep,
)
from .mle import EstimationResult, EstimatorOptions, MLEstimator, estimate, negloglik, negloglik_gradient
from .scenario import (
    ChannelScenario,
    PowerRatios,
    StaticAggregate,
    aggregate_statics,
    doppler_steering,
    load_scenario,
    paper_scenario,
    power_ratios,
    save_scenario,
    steering_phasor,
    steering_phasor_derivative,
)
from .schedule import SymbolSchedule, load_schedule, save_schedule
from .sim import (
    ClockOffsets,
    CsiRatioSeries,
    HighSnrReport,
    check_high_snr,
    csi_ratio,
    generate_csi,
    random_offsets,
    ratio_model,
    zero_offsets,
)
from .waveform import (
    DesignResult,
    HalfSchedule,
    OptimizerConfig,
    envelope,
    half_mean_phasor,
    l1_metric,
    noise_limited_schedule,
    optimize_interference_limited,
    perturbation_bound,
    sidelobe_power,
)
