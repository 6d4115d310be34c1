"""Linear feedback particle filters.

Exact interacting-particle implementations of the Kalman-Bucy filter, the
gauge freedom relating them, and the transport cost that selects among them.
"""

from .cost import (
    CostEvaluation,
    Infeasible,
    MinimizerData,
    cost_L,
    cost_gradient,
    global_minimizer,
    minimize_constrained,
    scalar_feasibility,
)
from .errors import (
    ConfigError,
    CovarianceBlowup,
    DegenerateC,
    DimensionMismatch,
    FilterError,
    InsufficientParticles,
    NonFinite,
    NotPositiveDefinite,
    NotSkew,
    RankExceedsChannels,
    SingularG,
    SingularInput,
)
from .fpf import (
    Ensemble,
    FilterSpec,
    advance_ensemble,
    conditional_cov_propagate,
    drift_gain,
    linear_flow,
    particle_step,
    preset_detfpf,
    preset_divfree,
    preset_kim,
    preset_otdetfpf,
    preset_slfpf,
    sample_ensemble,
)
from .gauge import (
    GaugeMotion,
    GaugePath,
    GaugeSpec,
    gauge_drift,
    gauge_step,
    identity_gauge,
    integrate_gauge,
    pushforward_spec,
    transitivity_witness,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    build_filter,
    config_from_dict,
    ensemble_stats,
    load_config,
    run_experiment,
    write_report,
)
from .kalman import (
    KalmanPath,
    ObservationPath,
    TimeGrid,
    integrate_kalman,
    make_rng,
    riccati_rhs,
    simulate_truth_and_observations,
)
from .linmodel import LinearGaussianModel, validate_model
from .skewalg import (
    check_skew,
    project_to_gauge_group,
    random_skew,
    skew_basis,
    skew_part,
    solve_skew_lyapunov,
    sym_part,
)

__version__ = "0.1.0"
