"""Collider-constrained regression: estimators, generators and benchmark harness."""

__version__ = "0.1.0"

from .graph import (  # noqa: F401
    ColliderPartition,
    CycleError,
    Dag,
    GraphError,
    PartitionError,
    boundary_colliders,
    collider_partition,
    d_separated,
    markov_boundary,
    parse_dag,
)
from .numerics import (  # noqa: F401
    ConditionalGaussian,
    FactorizationError,
    JitterPolicy,
    PsdFactorization,
    RngStream,
    cholesky_psd,
    conditional_gaussian,
    min_eigenvalue,
    sample_gaussian,
    solve_regularized,
)
from .kernels import (  # noqa: F401
    ColliderKernel,
    GaussianKernel,
    ProjectedKernel,
    fit_projected_kernel,
    general_projected_kernel_eval,
    gram,
    kernel_eval,
    median_sqdist,
    projected_kernel_eval,
)
from .cme import CmeFit, DualFunction, cme_embed_eval, cme_inner, fit_cme  # noqa: F401
from .regressors import (  # noqa: F401
    FittedForest,
    FittedKrr,
    FittedOls,
    ForestParams,
    ForestSpec,
    KrrSpec,
    OlsSpec,
    forest_fit,
    forest_predict,
    krr_fit,
    krr_predict,
    ols_fit,
    ols_predict,
)
from .collider import (  # noqa: F401
    GeneralColliderFit,
    HpKrrFit,
    MeanCenteringSpec,
    PkrrFit,
    ProjectedRegressor,
    general_fit,
    general_predict,
    hpkrr_fit,
    hpkrr_predict,
    pkrr_fit,
    pkrr_predict,
    project_regressor,
)
from .datagen import (  # noqa: F401
    GeneralScales,
    LatentOracle,
    SigmaSpec,
    SimDataset,
    Split,
    SplitSizes,
    fixture_indicator_collider,
    g1,
    g2,
    latent_conditional_variance,
    make_sigma,
    oracle_conditional_expectation,
    simulate,
    simulate_general,
    write_dataset,
)
from .evalharness import (  # noqa: F401
    DeltaEstimate,
    GridSearchResult,
    GridSpec,
    HarnessError,
    Metrics,
    SeedResult,
    compute_metrics,
    delta_mc,
    delta_mc_general,
    gap_lower_bound,
    grid_search_cv,
    run_ablation,
    run_experiment,
    spearman_rho,
    summarize_results,
    wilcoxon_signed_rank,
)
from .config import (  # noqa: F401
    ConfigError,
    ExperimentConfig,
    GeneratorConfig,
    ModelConfig,
    OracleConfig,
    OutputConfig,
    default_config,
    load_config,
    parse_config,
    serialize_config,
)
