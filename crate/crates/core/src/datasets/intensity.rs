use super::types::SessionDataset;
use crate::signal::{filter_causal, mav_scalar, window_starts, FilterCoefficients, RawSignal, WindowSpec};
use crate::{Error, Result, NUM_GESTURES};

/// Maximal-effort MAV per gesture, taken from cycle 2 of the first session.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityReference {
    pub per_gesture: Vec<f64>,
}

impl IntensityReference {
    /// Mean window MAV of each gesture span of cycle 2, on the filtered signal.
    pub fn from_session(session: &SessionDataset, coeffs: &FilterCoefficients, window: &WindowSpec) -> Result<Self> {
        let cycle = session.cycle(2).ok_or_else(|| Error::Data {
            path: format!("participant {} session {}", session.participant, session.session).into(),
            reason: "cycle 2 (maximal intensity) is missing".into(),
        })?;
        let filtered = filter_causal(&cycle.signal, coeffs)?;
        let (w, s) = window.in_samples(filtered.sample_rate())?;
        let mut per_gesture = vec![0.0; NUM_GESTURES];
        for span in &cycle.spans {
            let part = filtered.slice(span.start, span.len)?;
            let mavs: Vec<f64> = window_starts(part.len(), w, s)
                .map(|t| part.slice(t, w).and_then(|x| mav_scalar(&x)))
                .collect::<Result<_>>()?;
            if mavs.is_empty() {
                return Err(Error::Insufficient(format!(
                    "gesture {} span shorter than one window",
                    span.gesture
                )));
            }
            per_gesture[span.gesture] = mavs.iter().sum::<f64>() / mavs.len() as f64;
        }
        let reference = Self { per_gesture };
        reference.validate()?;
        Ok(reference)
    }

    pub fn validate(&self) -> Result<()> {
        for (g, &v) in self.per_gesture.iter().enumerate().skip(1) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Degenerate(if g == 0 {
                    "neutral reference"
                } else {
                    "zero intensity reference"
                }));
            }
        }
        Ok(())
    }

    /// `mav / reference[gesture]`.
    pub fn ratio(&self, mav: f64, gesture: usize) -> Result<f64> {
        let r = *self.per_gesture.get(gesture).ok_or(Error::LabelOutOfRange {
            label: gesture,
            classes: self.per_gesture.len(),
        })?;
        if !(r > 0.0) {
            return Err(Error::Degenerate("zero intensity reference"));
        }
        Ok(mav / r)
    }
}

/// Fraction of the maximal MAV reached by `window` for `gesture`.
pub fn intensity_ratio(window: &RawSignal, reference: &IntensityReference, gesture: usize) -> Result<f64> {
    reference.ratio(mav_scalar(window)?, gesture)
}

/// Requested-intensity level: 1 below 25%, 2 from 25% to 45% inclusive,
/// 3 above 45%.
pub fn label_intensity_level(ratio: f64) -> u8 {
    if ratio < 0.25 {
        1
    } else if ratio <= 0.45 {
        2
    } else {
        3
    }
}
