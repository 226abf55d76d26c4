//! Staged identification: plans, datasets, training, validation, the
//! coupled solve and whole-plan runs.

mod coupled;
mod dataset;
mod identify;
mod plan;
mod run;
mod stage;
mod train;
mod validate;

pub use coupled::{solve_coupled, CoupledConfig, CoupledMethod, CoupledSolution};
pub use dataset::{build_dataset, input_rule, Dataset, ExcludedRow};
pub use identify::{identify, load_trained, CoupledReport, Estimate, Identification, Measurements};
pub use plan::{
    Frozen, FrozenKeyword, IdentificationPlan, ScreeningSpec, StageSpec, DEFAULT_FITNESS_CALLS,
    DEFAULT_VALIDATION_BAND, DEFAULT_WEIGHT_BOUND, PLAN_FORMAT,
};
pub use run::{
    run_plan, verify_manifest, IdentificationStatus, Measurement, RunManifest, RunOptions, RunOutcome,
    RunSummary, StageFailure, StageStatus, MANIFEST_FORMAT,
};
pub use stage::{
    bundle_key, common_grid, fit_stage, run_stage, simulate_cached, stage_design, train_config, write_fitted,
    write_sensitivity, FittedStage, StageDirs, StageRun, TrainedStage, TRAINED_STAGE_FORMAT,
};
pub use train::{train_network, train_stage, training_history_csv, TrainConfig, TrainRecord, TrainedNetwork};
pub use validate::{validate_stage, ValidationCase, ValidationReport};
