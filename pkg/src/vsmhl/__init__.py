"""Volatility-stabilized market particle system and its hydrodynamic limit.

Simulates the N-particle system on the slowed-down clock, evaluates the
explicit limit law (time-changed squared Bessel marginals), solves the
limiting degenerate forward PDE, and measures how fast empirical measure
paths approach the limit.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DegenerateStateError,
    GridMismatchError,
    ValidationError,
)
from .model import (
    DiscreteAtoms,
    GammaLaw,
    InitialLaw,
    ModelParams,
    PointMass,
    UniformLaw,
    law_from_dict,
    law_to_dict,
    moments,
    sample_initial,
    split_rng,
    validate,
)
from .bessel import (
    log_modified_bessel_i,
    modified_bessel_i,
    modified_bessel_i_scaled,
)
from .limit import (
    LimitLaw,
    cdf,
    density,
    density_grid,
    mean,
    quantile,
    sample,
    table_to_csv,
    time_change,
)
from .particles import (
    ParticlePaths,
    euler_full_truncation,
    log_growth_diagnostic,
    mean_path,
    paths_to_csv,
    simulate_system,
)
from .measures import (
    Measure1D,
    MeasurePath,
    empirical,
    levy,
    market_weights,
    measure_to_csv,
    ranked_vs_limit,
    sup_distance,
    wasserstein1,
)
from .pde import (
    DensityTrajectory,
    SolverGrid,
    TestFunction,
    mollified_start_law,
    solve,
    test_function_bank,
    weak_residual,
)
from .experiments import (
    EXPERIMENT_KINDS,
    ExperimentConfig,
    ExperimentResult,
    run_convergence,
    run_experiment,
    run_moment_check,
    run_pde_check,
    run_rank_check,
    run_sampler_check,
    write_results,
)
