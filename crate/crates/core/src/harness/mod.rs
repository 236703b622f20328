//! Experiment orchestration: regimes, hyperparameter search, cross-validated
//! and held-out evaluation, stress scoring and feature-subset retraining.

pub mod experiment;
pub mod regime;
pub mod report;
pub mod search;

pub use experiment::{
    fit_final_generator, importance_for, load_dataset, load_report, model_specs, retrain_on_selected_features,
    retrain_on_table, run_experiment, run_on_table, split_dataset, stress_cohort, train_final, tuned_hyperparams,
    TrainedBundle, TrainedModel,
};
pub use regime::{augment_training_fold, Augmentation, RegimeSpec, SynthCount};
pub use report::*;
pub use search::{default_space, merge_hyperparams, random_search, ParamRange, SearchOutcome, SearchSpace};
