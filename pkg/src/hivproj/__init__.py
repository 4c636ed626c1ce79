"""Probabilistic population projections for countries with generalized HIV
epidemics: prevalence trajectory generation, a hierarchical life-expectancy
model, an SVD-calibrated joint model life table, cohort-component
projection, and out-of-sample validation metrics.
"""

from .ccmpp import (
    FertilityInput,
    MigrationInput,
    ProjectionResult,
    project_step,
    run_projection,
    summarize_quantiles,
)
from .e0model import (
    DoubleLogisticParams,
    E0Model,
    E0TrajectorySet,
    HnaSeries,
    McmcSettings,
    calibrate_e0_model,
    double_logistic,
    project_e0_step,
    simulate_e0_trajectories,
)
from .lifetable import (
    AbridgedLifeTable,
    AConvention,
    AgeGrid,
    MortalitySchedule,
    PopulationPyramid,
    build_life_table,
    summary_index,
    survivorship_ratios,
)
from .mlt import (
    CalibrationMatrix,
    JointSchedulePair,
    MltBasis,
    add_rate_noise,
    calibrate_mlt,
    generate_schedule,
    match_e0,
    predict_weights,
)
from .pipeline import (
    DataBundle,
    ProjectionSettings,
    calibrate_models,
    load_bundle,
    project_all,
    project_country,
)
from .prevalence import (
    EppParams,
    FiveYearPrevalence,
    PrevalenceTrajectorySet,
    aggregate_five_year,
    decay_parameters,
    sample_epp_fan,
    scale_trajectories,
    simulate_epp,
)
from .validate import (
    HoldoutSpec,
    MetricReport,
    coverage,
    mae,
    mean_difference,
    mean_proportional_difference,
    run_holdout,
)

__version__ = "0.1.0"
