//! Small synthetic datasets that train in well under a second per session.

use semgkit::datasets::{synthesize_participant, PreprocessSpec, Preprocessor, SessionDataset, SynthSpec, WindowSet};
use semgkit::model::TcnConfig;
use semgkit::training::{ExperimentSpec, SessionPlan, TrainSpec, DEFAULT_TEST_CYCLE, DEFAULT_TRAIN_CYCLES};

pub fn tiny_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        num_participants: 1,
        gesture_seconds: 0.5,
        trials_per_run: 11,
        trial_seconds: 1.0,
        seed,
        ..SynthSpec::default()
    }
}

pub fn tiny_sessions(seed: u64) -> Vec<SessionDataset> {
    synthesize_participant(&tiny_spec(seed), 1).expect("valid synthetic spec")
}

pub fn tiny_sets(seed: u64) -> Vec<WindowSet> {
    let pre = Preprocessor::new(PreprocessSpec::default()).expect("default preprocessing");
    pre.participant(&tiny_sessions(seed)).expect("preprocessing")
}

pub fn tiny_plan(seed: u64) -> SessionPlan {
    SessionPlan::new(1, &tiny_sets(seed), &DEFAULT_TRAIN_CYCLES, DEFAULT_TEST_CYCLE).expect("plan")
}

pub fn tiny_experiment(seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        model: TcnConfig::with_width(6),
        train: TrainSpec {
            batch_size: 32,
            max_epochs: 3,
            seed,
            ..TrainSpec::default()
        },
        adann: Default::default(),
    }
}
