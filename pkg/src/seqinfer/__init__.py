"""Confidence intervals after fully sequential stopping.

Naive, bias-corrected and renormalized pivots, sequential bootstrap, hybrid and
parametric-exact resampling, and a Monte Carlo harness for quantile and
coverage studies.
"""

from .exceptions import ConfigError, DegenerateSampleError, SeqInferError
from .sampling import (
    IDENTITY_MAP,
    SQUARE_MAP,
    Empirical,
    NormalExpMixture,
    NormalKnownVar,
    ObservationMap,
    RandomStream,
    ShiftedEmpirical,
    draw,
    lift_sequence,
    make_stream,
)
from .stopping import (
    BoundaryFunction,
    StoppedSample,
    StoppingRule,
    example1_rule,
    example2_rule,
    example4_rule,
    kappa,
    quadratic_boundary,
    run_trial,
    smoothed_abs_boundary,
    stopped_sample,
    stopping_time_of,
    studentized_boundary,
)
from .pivots import (
    MomentEstimates,
    RootKind,
    SmoothFunctional,
    bias_b,
    empirical_quantile,
    eval_R,
    eval_R0,
    eval_R1,
    grad_kappa_sqrt,
    moment_estimates,
    normal_quantile,
    t_quantile,
)
from .resampling import (
    Bootstrap,
    HybridShift,
    Parametric,
    RootSpec,
    quantile_pair,
    simulate_root_distribution,
)
from .intervals import (
    GridSpec,
    IntervalResult,
    interval_bootstrap,
    interval_exact,
    interval_hybrid,
    interval_normal_R,
    interval_normal_R0,
    interval_normal_R1,
    interval_t,
)
from .estimators import SequentialConfidenceInterval
from .harness import (
    CoverageReport,
    ExperimentConfig,
    QuantileTable,
    load_config,
    load_dataset,
    parse_config,
    run_coverage,
    run_quantile_table,
    write_report,
)

__version__ = "0.1.0"
