//! Recording → labeled analysis windows.

use super::intensity::IntensityReference;
use super::types::SessionDataset;
use crate::kernel::{Real, Tensor};
use crate::signal::{design_bandpass, filter_causal, window_starts, FilterCoefficients, FilterSpec, WindowSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PreprocessSpec {
    pub filter: FilterSpec,
    pub window: WindowSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WindowOrigin {
    Cycle(u32),
    Evaluation { run: u32, trial: usize },
}

impl WindowOrigin {
    pub fn cycle(&self) -> Option<u32> {
        match self {
            WindowOrigin::Cycle(c) => Some(*c),
            WindowOrigin::Evaluation { .. } => None,
        }
    }
}

/// Label and context of one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowMeta {
    pub participant: u32,
    pub session: u32,
    pub origin: WindowOrigin,
    pub label: usize,
    /// First sample of the window within its recording.
    pub start: usize,
    /// Seconds between the gesture cue and the window start.
    pub since_cue: f64,
    pub mav: f64,
    pub intensity_ratio: Option<f64>,
    /// Requested level for evaluation trials.
    pub level: Option<u8>,
    /// Measured orientation at the window start, degrees.
    pub pitch: f64,
    pub yaw: f64,
}

/// Windows stored contiguously (`channels × len` values each, channel-major).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowSet {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f32>,
    pub meta: Vec<WindowMeta>,
}

impl WindowSet {
    pub fn new(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: Vec::new(),
            meta: Vec::new(),
        }
    }

    pub fn count(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn window(&self, i: usize) -> &[f32] {
        let n = self.channels * self.len;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn push(&mut self, values: &[f32], meta: WindowMeta) {
        assert_eq!(values.len(), self.channels * self.len);
        self.data.extend_from_slice(values);
        self.meta.push(meta);
    }

    pub fn extend(&mut self, other: &WindowSet) -> Result<()> {
        if other.is_empty() {
            return Ok(());
        }
        if self.is_empty() && self.data.is_empty() {
            self.channels = other.channels;
            self.len = other.len;
        }
        if (self.channels, self.len) != (other.channels, other.len) {
            return Err(Error::shape("WindowSet::extend", "window geometry differs"));
        }
        self.data.extend_from_slice(&other.data);
        self.meta.extend_from_slice(&other.meta);
        Ok(())
    }

    /// Windows whose metadata satisfies `keep`, in their original order.
    pub fn filter(&self, keep: impl Fn(&WindowMeta) -> bool) -> WindowSet {
        let idx: Vec<usize> = (0..self.count()).filter(|&i| keep(&self.meta[i])).collect();
        self.select(&idx)
    }

    pub fn select(&self, indices: &[usize]) -> WindowSet {
        let mut out = WindowSet::new(self.channels, self.len);
        out.data.reserve(indices.len() * self.channels * self.len);
        for &i in indices {
            out.push(self.window(i), self.meta[i]);
        }
        out
    }

    pub fn labels(&self) -> Vec<usize> {
        self.meta.iter().map(|m| m.label).collect()
    }

    /// `[indices.len(), channels, len]` batch.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> Tensor<T> {
        let mut data = Vec::with_capacity(indices.len() * self.channels * self.len);
        for &i in indices {
            data.extend(self.window(i).iter().map(|&v| T::lit(v as f64)));
        }
        Tensor::from_vec(&[indices.len(), self.channels, self.len], data).expect("batch shape")
    }

    pub fn all<T: Real>(&self) -> Tensor<T> {
        let idx: Vec<usize> = (0..self.count()).collect();
        self.batch(&idx)
    }
}

/// Filters each recording once, then cuts windows inside each gesture span
/// or evaluation trial. Windows never straddle two labels.
pub struct Preprocessor {
    spec: PreprocessSpec,
    coeffs: FilterCoefficients,
}

impl Preprocessor {
    pub fn new(spec: PreprocessSpec) -> Result<Self> {
        spec.window.validate()?;
        Ok(Self {
            coeffs: design_bandpass(&spec.filter)?,
            spec,
        })
    }

    pub fn spec(&self) -> &PreprocessSpec {
        &self.spec
    }

    pub fn coefficients(&self) -> &FilterCoefficients {
        &self.coeffs
    }

    pub fn reference(&self, first_session: &SessionDataset) -> Result<IntensityReference> {
        IntensityReference::from_session(first_session, &self.coeffs, &self.spec.window)
    }

    /// Windows of one session. `reference`, when given, fills in intensity
    /// ratios.
    pub fn session(&self, session: &SessionDataset, reference: Option<&IntensityReference>) -> Result<WindowSet> {
        let fs = crate::SAMPLE_RATE_HZ;
        let (w, s) = self.spec.window.in_samples(fs)?;
        let channels = session
            .cycles
            .first()
            .map(|c| c.signal.channels())
            .or_else(|| session.evaluation_runs.first().map(|r| r.signal.channels()))
            .unwrap_or(crate::NUM_CHANNELS);
        let mut out = WindowSet::new(channels, w);
        let mut buf = vec![0.0f32; channels * w];
        let mut cut = |filtered: &crate::signal::RawSignal,
                       start: usize,
                       len: usize,
                       base: WindowMeta,
                       orient: &dyn Fn(usize) -> (f64, f64),
                       out: &mut WindowSet|
         -> Result<()> {
            for t in window_starts(len, w, s) {
                let at = start + t;
                let mut total = 0.0;
                for c in 0..channels {
                    let src = &filtered.channel(c)[at..at + w];
                    for (d, &v) in buf[c * w..(c + 1) * w].iter_mut().zip(src) {
                        *d = v as f32;
                        total += v.abs();
                    }
                }
                let mav = total / (channels * w) as f64;
                let ratio = match reference {
                    Some(r) if base.label != 0 => Some(r.ratio(mav, base.label)?),
                    _ => None,
                };
                let (pitch, yaw) = orient(at);
                out.push(
                    &buf,
                    WindowMeta {
                        start: at,
                        since_cue: t as f64 / fs,
                        mav,
                        intensity_ratio: ratio,
                        pitch,
                        yaw,
                        ..base
                    },
                );
            }
            Ok(())
        };
        for cycle in &session.cycles {
            let filtered = filter_causal(&cycle.signal, &self.coeffs)?;
            for span in &cycle.spans {
                let base = WindowMeta {
                    participant: session.participant,
                    session: session.session,
                    origin: WindowOrigin::Cycle(cycle.id),
                    label: span.gesture,
                    start: 0,
                    since_cue: 0.0,
                    mav: 0.0,
                    intensity_ratio: None,
                    level: None,
                    pitch: 0.0,
                    yaw: 0.0,
                };
                cut(&filtered, span.start, span.len, base, &|_| (0.0, 0.0), &mut out)?;
            }
        }
        for run in &session.evaluation_runs {
            let filtered = filter_causal(&run.signal, &self.coeffs)?;
            for (k, trial) in run.trials.iter().enumerate() {
                let base = WindowMeta {
                    participant: session.participant,
                    session: session.session,
                    origin: WindowOrigin::Evaluation { run: run.id, trial: k },
                    label: trial.gesture,
                    start: 0,
                    since_cue: 0.0,
                    mav: 0.0,
                    intensity_ratio: None,
                    level: Some(trial.level),
                    pitch: 0.0,
                    yaw: 0.0,
                };
                cut(
                    &filtered,
                    trial.start,
                    trial.len,
                    base,
                    &|t| run.orientation_at(t),
                    &mut out,
                )?;
            }
        }
        Ok(out)
    }

    /// Windows of all sessions of one participant (sessions in order); the
    /// intensity reference comes from the first session.
    pub fn participant(&self, sessions: &[SessionDataset]) -> Result<Vec<WindowSet>> {
        let first = sessions
            .first()
            .ok_or_else(|| Error::Insufficient("participant has no sessions".into()))?;
        let reference = self.reference(first).ok();
        sessions.iter().map(|s| self.session(s, reference.as_ref())).collect()
    }
}
