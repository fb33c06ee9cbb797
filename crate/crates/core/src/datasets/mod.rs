//! Session datasets: the canonical on-disk format, the synthetic generator,
//! intensity labeling and the recording-to-window pipeline.

mod canonical;
mod intensity;
mod preprocess;
mod synth;
mod types;

pub use canonical::{
    checksum_session, dataset_checksum, load_canonical, verify_manifest, write_canonical, LoadedDataset, MANIFEST_NAME,
};
pub use intensity::{intensity_ratio, label_intensity_level, IntensityReference};
pub use preprocess::{PreprocessSpec, Preprocessor, WindowMeta, WindowOrigin, WindowSet};
pub use synth::{
    participant_templates, rotate_channels, synthesize, synthesize_participant, SynthSpec, PITCH_LIMIT, YAW_LIMIT,
};
pub use types::{check_session_order, Cycle, EvaluationRun, GestureSpan, SessionDataset, Trial};

/// Groups sessions by participant, keeping their order.
pub fn by_participant(sessions: &[SessionDataset]) -> Vec<(u32, Vec<SessionDataset>)> {
    let mut out: Vec<(u32, Vec<SessionDataset>)> = Vec::new();
    for s in sessions {
        match out.last_mut() {
            Some((p, v)) if *p == s.participant => v.push(s.clone()),
            _ => out.push((s.participant, vec![s.clone()])),
        }
    }
    out
}
