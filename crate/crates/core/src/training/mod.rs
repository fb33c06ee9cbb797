//! Supervised training with validation-driven annealing and early stopping,
//! adversarial multi-session pre-training, TADANN target training and the
//! four long-term calibration schemes.

mod adann;
mod schemes;
mod spec;
mod supervised;

pub use adann::{adann_gradients, adann_pretrain, AdannLosses, DomainSet, SOURCE_DOMAIN, TARGET_DOMAIN};
pub use schemes::{
    run_calibration_scheme, run_schemes, train_tadann, train_tadann_at, CalibrationScheme, ExperimentSpec,
    PlannedSession, SchemeOutcome, Score, SessionOutcome, SessionPlan, TrainedModel, DEFAULT_TEST_CYCLE,
    DEFAULT_TRAIN_CYCLES, MAX_INTENSITY_CYCLE,
};
pub use spec::{AdannSpec, EpochRecord, History, TargetInit, TrainSpec};
pub use supervised::{
    mean_loss, predict_set, stratified_split, train_supervised, AdannStep, NoObserver, TrainObserver, EVAL_CHUNK,
};
