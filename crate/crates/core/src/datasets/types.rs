use crate::signal::RawSignal;
use crate::{Error, Result, NUM_GESTURES};

/// A contiguous stretch of one gesture inside a recording, in samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GestureSpan {
    pub gesture: usize,
    pub start: usize,
    pub len: usize,
}

/// One pass over all gestures in a training session.
#[derive(Debug, Clone, PartialEq)]
pub struct Cycle {
    pub id: u32,
    pub signal: RawSignal,
    pub spans: Vec<GestureSpan>,
}

/// A cued trial of an evaluation run. Angles are in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub gesture: usize,
    pub level: u8,
    pub pitch: f64,
    pub yaw: f64,
    pub start: usize,
    pub len: usize,
}

/// A randomized, cued recording with measured limb orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRun {
    pub id: u32,
    pub signal: RawSignal,
    pub trials: Vec<Trial>,
    /// Orientation sampling rate in Hz.
    pub frame_rate: f64,
    /// Measured (pitch, yaw) per frame, degrees.
    pub orientation: Vec<(f64, f64)>,
    pub score: Option<f64>,
}

impl EvaluationRun {
    /// Measured orientation at a sample index (nearest earlier frame).
    pub fn orientation_at(&self, sample: usize) -> (f64, f64) {
        if self.orientation.is_empty() {
            return (0.0, 0.0);
        }
        let t = sample as f64 / self.signal.sample_rate();
        let frame = ((t * self.frame_rate).floor() as usize).min(self.orientation.len() - 1);
        self.orientation[frame]
    }
}

/// Everything recorded for one participant in one lab visit.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionDataset {
    pub participant: u32,
    /// 1-based, strictly increasing per participant.
    pub session: u32,
    pub day_offset: f64,
    /// Amplitude of one ADC step; stored samples are `i16 * lsb`.
    pub lsb: f64,
    pub cycles: Vec<Cycle>,
    pub evaluation_runs: Vec<EvaluationRun>,
    /// SHA-256 over the session's canonical files.
    pub checksum: String,
}

impl SessionDataset {
    pub fn cycle(&self, id: u32) -> Option<&Cycle> {
        self.cycles.iter().find(|c| c.id == id)
    }

    /// Structural checks shared by the loader and the generator.
    pub fn validate(&self) -> Result<()> {
        let err = |reason: String| Error::Data {
            path: format!("participant {} session {}", self.participant, self.session).into(),
            reason,
        };
        if !(self.lsb > 0.0 && self.lsb.is_finite()) {
            return Err(err("lsb must be positive".into()));
        }
        for c in &self.cycles {
            if c.spans.len() != NUM_GESTURES {
                return Err(err(format!(
                    "cycle {}: gesture count {} != {NUM_GESTURES}",
                    c.id,
                    c.spans.len()
                )));
            }
            check_spans(c.signal.len(), c.spans.iter().map(|s| (s.gesture, s.start, s.len)))
                .map_err(|r| err(format!("cycle {}: {r}", c.id)))?;
        }
        for r in &self.evaluation_runs {
            check_spans(r.signal.len(), r.trials.iter().map(|t| (t.gesture, t.start, t.len)))
                .map_err(|e| err(format!("evaluation run {}: {e}", r.id)))?;
            for t in &r.trials {
                if !(1..=3).contains(&t.level) {
                    return Err(err(format!("evaluation run {}: intensity level {}", r.id, t.level)));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn check_spans(
    total: usize,
    spans: impl Iterator<Item = (usize, usize, usize)>,
) -> std::result::Result<(), String> {
    let mut end = 0;
    for (gesture, start, len) in spans {
        if gesture >= NUM_GESTURES {
            return Err(format!("gesture {gesture} out of range"));
        }
        if start < end {
            return Err(format!("span at {start} overlaps the previous one"));
        }
        end = start + len;
        if end > total {
            return Err(format!("span ends at {end}, past the {total} recorded samples"));
        }
    }
    Ok(())
}

/// Checks ordering of a participant's sessions.
pub fn check_session_order(sessions: &[SessionDataset]) -> Result<()> {
    for pair in sessions.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.participant == b.participant && b.session <= a.session {
            return Err(Error::Data {
                path: format!("participant {}", b.participant).into(),
                reason: format!("session {} follows session {}", b.session, a.session),
            });
        }
    }
    Ok(())
}
