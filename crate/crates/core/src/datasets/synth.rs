//! Synthetic multi-session EMG-like recordings.
//!
//! Each channel is band-limited noise (20-450 Hz) scaled by an envelope:
//!
//! `env_c = amplitude * intensity * position(template_g shifted by the
//! session's electrode offset, pitch, yaw)_c * max(0, 1 + drift * days * P_gc)`
//!
//! plus an additive band-limited noise floor that grows linearly with days.
//! `position` also carries a postural load: holding the limb away from
//! neutral raises every channel, so evaluation trials run hotter than the
//! neutral-posture training cycles.
//! `P` is a fixed per-participant perturbation direction, so day drift is a
//! linear, multiplicative change of each gesture's channel pattern.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::types::{Cycle, EvaluationRun, GestureSpan, SessionDataset, Trial};
use crate::rng::{rng_for, tag};
use crate::signal::{design_bandpass, FilterCoefficients, FilterSpec, RawSignal};
use crate::{Error, Result, NUM_CHANNELS, NUM_GESTURES, SAMPLE_RATE_HZ};

/// Parameters of the generator. Angles are degrees, shifts are in channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_participants: u32,
    pub num_sessions: u32,
    pub days_between_sessions: f64,
    pub cycles: u32,
    pub gesture_seconds: f64,
    pub evaluation_runs: u32,
    pub trials_per_run: usize,
    pub trial_seconds: f64,
    /// Per-gesture channel templates (11 rows of 10); generated when absent.
    pub templates: Option<Vec<Vec<f64>>>,
    /// Gaussian width of generated template bumps, in channels.
    pub template_width: f64,
    pub neutral_level: f64,
    pub amplitude: f64,
    pub drift_per_day: f64,
    pub shift_per_session: f64,
    /// Standard deviation of a random per-session armband rotation, in
    /// channels, added to the systematic shift.
    pub placement_jitter: f64,
    pub intensity_mean: f64,
    pub intensity_std: f64,
    /// Replaces the natural intensity draw for every non-maximal gesture.
    pub fixed_intensity: Option<f64>,
    pub noise_level: f64,
    pub noise_growth_per_day: f64,
    pub position_gain: f64,
    /// Extra activation for holding the limb away from neutral, reached at
    /// both the pitch and yaw limits.
    pub postural_load: f64,
    /// Yaw beyond which the pattern distorts.
    pub external_yaw: f64,
    /// Distortion weight reached at the yaw limit (70 degrees).
    pub external_distortion: f64,
    pub transition_ms: f64,
    pub reaction_ms: f64,
    pub lsb: f64,
    pub frame_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_participants: 2,
            num_sessions: 3,
            days_between_sessions: 7.0,
            cycles: 4,
            gesture_seconds: 5.0,
            evaluation_runs: 1,
            trials_per_run: 42,
            trial_seconds: 5.0,
            templates: None,
            template_width: 0.9,
            neutral_level: 0.06,
            amplitude: 1.0,
            drift_per_day: 0.02,
            shift_per_session: 0.5,
            placement_jitter: 0.0,
            // measured mean natural intensity, not log10(e)
            #[allow(clippy::approx_constant)]
            intensity_mean: 0.4343,
            intensity_std: 0.2302,
            fixed_intensity: None,
            noise_level: 0.02,
            noise_growth_per_day: 0.002,
            position_gain: 0.2,
            postural_load: 0.5,
            external_yaw: 40.0,
            external_distortion: 0.7,
            transition_ms: 100.0,
            reaction_ms: 500.0,
            lsb: 1.0 / 2048.0,
            frame_rate: 50.0,
            seed: 0,
        }
    }
}

pub const PITCH_LIMIT: f64 = 45.0;
pub const YAW_LIMIT: f64 = 70.0;
const MIN_INTENSITY: f64 = 0.05;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_participants", self.num_participants),
            ("num_sessions", self.num_sessions),
            ("cycles", self.cycles),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.cycles < 2 {
            return Err(Error::config("cycles", "need cycle 2 for the intensity reference"));
        }
        let rates = [
            ("days_between_sessions", self.days_between_sessions),
            ("template_width", self.template_width),
            ("neutral_level", self.neutral_level),
            ("drift_per_day", self.drift_per_day),
            ("shift_per_session", self.shift_per_session),
            ("placement_jitter", self.placement_jitter),
            ("intensity_std", self.intensity_std),
            ("noise_level", self.noise_level),
            ("noise_growth_per_day", self.noise_growth_per_day),
            ("position_gain", self.position_gain),
            ("postural_load", self.postural_load),
            ("external_distortion", self.external_distortion),
            ("transition_ms", self.transition_ms),
            ("reaction_ms", self.reaction_ms),
        ];
        for (field, v) in rates {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(field, format!("{v} is not finite and non-negative")));
            }
        }
        let positive = [
            ("gesture_seconds", self.gesture_seconds),
            ("trial_seconds", self.trial_seconds),
            ("amplitude", self.amplitude),
            ("intensity_mean", self.intensity_mean),
            ("lsb", self.lsb),
            ("frame_rate", self.frame_rate),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("{v} must be positive")));
            }
        }
        if !(0.0..=YAW_LIMIT).contains(&self.external_yaw) {
            return Err(Error::config("external_yaw", "must lie in [0, 70]"));
        }
        if let Some(v) = self.fixed_intensity {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config("fixed_intensity", "must be positive"));
            }
        }
        if let Some(t) = &self.templates {
            check_templates(t)?;
        }
        Ok(())
    }

    pub fn day_offset(&self, session: u32) -> f64 {
        (session - 1) as f64 * self.days_between_sessions
    }

    /// Cumulative electrode rotation of a session, in channels.
    pub fn electrode_shift(&self, session: u32) -> f64 {
        (session - 1) as f64 * self.shift_per_session
    }
}

fn check_templates(t: &[Vec<f64>]) -> Result<()> {
    if t.len() != NUM_GESTURES || t.iter().any(|r| r.len() != NUM_CHANNELS) {
        return Err(Error::config("templates", "need 11 rows of 10 channel weights"));
    }
    for (g, row) in t.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(
                "templates",
                format!("gesture {g} has a negative or non-finite weight"),
            ));
        }
        if row.iter().all(|&v| v == 0.0) {
            return Err(Error::config("templates", format!("gesture {g} template is all zero")));
        }
    }
    Ok(())
}

/// Circular rotation with linear interpolation: `out[c] = x[c - shift]`.
pub fn rotate_channels(x: &[f64], shift: f64) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|c| {
            let pos = (c as f64 - shift).rem_euclid(n);
            let lo = pos.floor();
            let frac = pos - lo;
            let i = lo as usize % x.len();
            let j = (i + 1) % x.len();
            x[i] * (1.0 - frac) + x[j] * frac
        })
        .collect()
}

/// Activation templates of one participant (row 0 is neutral).
pub fn participant_templates(spec: &SynthSpec, participant: u32) -> Result<Vec<Vec<f64>>> {
    if let Some(t) = &spec.templates {
        check_templates(t)?;
        return Ok(t.clone());
    }
    let mut rng = rng_for(spec.seed, &[tag("templates"), participant as u64]);
    let n = NUM_CHANNELS as f64;
    let bump = |center: f64, c: usize| {
        let d = (c as f64 - center).rem_euclid(n);
        let d = d.min(n - d);
        (-0.5 * (d / spec.template_width).powi(2)).exp()
    };
    let mut out = Vec::with_capacity(NUM_GESTURES);
    out.push(
        (0..NUM_CHANNELS)
            .map(|_| spec.neutral_level * rng.random_range(0.6..1.4))
            .collect(),
    );
    for g in 1..NUM_GESTURES {
        let main = (g - 1) as f64 * n / (NUM_GESTURES - 1) as f64 + rng.random_range(-0.25..0.25);
        let second = main + rng.random_range(2.5..7.5);
        let weight = rng.random_range(0.25..0.6);
        let row: Vec<f64> = (0..NUM_CHANNELS)
            .map(|c| bump(main, c) + weight * bump(second, c) + 0.03)
            .collect();
        out.push(row);
    }
    check_templates(&out)?;
    Ok(out)
}

/// Per-channel multiplicative gain and pattern distortion for a limb
/// orientation. Beyond `external_yaw` the pattern blends towards a copy
/// rotated by two channels.
fn position_pattern(spec: &SynthSpec, pattern: &[f64], pitch: f64, yaw: f64) -> Vec<f64> {
    let d = if yaw > spec.external_yaw && spec.external_yaw < YAW_LIMIT {
        spec.external_distortion * ((yaw - spec.external_yaw) / (YAW_LIMIT - spec.external_yaw)).min(1.0)
    } else {
        0.0
    };
    let base: Vec<f64> = if d > 0.0 {
        let rotated = rotate_channels(pattern, 2.0);
        pattern
            .iter()
            .zip(&rotated)
            .map(|(a, b)| (1.0 - d) * a + d * b)
            .collect()
    } else {
        pattern.to_vec()
    };
    let load = 1.0 + spec.postural_load * 0.5 * (pitch.abs() / PITCH_LIMIT + yaw.abs() / YAW_LIMIT);
    base.iter()
        .enumerate()
        .map(|(c, v)| {
            let phase = 2.0 * PI * c as f64 / NUM_CHANNELS as f64;
            let gain = 1.0
                + spec.position_gain * (pitch / PITCH_LIMIT) * phase.cos()
                + 0.5 * spec.position_gain * (yaw / YAW_LIMIT) * phase.sin();
            v * load * gain.max(0.0)
        })
        .collect()
}

/// One stretch of a recording with a constant target pattern.
struct Segment {
    pattern: Vec<f64>,
    intensity: f64,
    len: usize,
    /// Crossfade length from the previous segment, in samples.
    fade: usize,
}

fn band_noise(coeffs: &FilterCoefficients, gain: f64, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    const BURN_IN: usize = 256;
    let white: Vec<f64> = (0..len + BURN_IN).map(|_| StandardNormal.sample(rng)).collect();
    let y = crate::signal::filter_channel(coeffs, &white);
    y[BURN_IN..].iter().map(|v| v / gain).collect()
}

struct Carrier {
    coeffs: FilterCoefficients,
    gain: f64,
}

impl Carrier {
    fn new() -> Result<Self> {
        let coeffs = design_bandpass(&FilterSpec {
            low_cut: 20.0,
            high_cut: 450.0,
            order: 2,
            sample_rate: SAMPLE_RATE_HZ,
        })?;
        let gain = coeffs.noise_power_gain(4096).sqrt();
        Ok(Self { coeffs, gain })
    }
}

/// Renders segments into a quantized multichannel signal.
fn render(
    spec: &SynthSpec,
    carrier: &Carrier,
    segments: &[Segment],
    floor: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RawSignal> {
    let total: usize = segments.iter().map(|s| s.len).sum();
    let mut env = vec![vec![0.0; total]; NUM_CHANNELS];
    let mut t0 = 0;
    let mut prev: Option<Vec<f64>> = None;
    for seg in segments {
        let target: Vec<f64> = seg.pattern.iter().map(|v| v * seg.intensity).collect();
        for t in 0..seg.len {
            let w = if seg.fade == 0 || t >= seg.fade {
                1.0
            } else {
                (t as f64 + 0.5) / seg.fade as f64
            };
            for c in 0..NUM_CHANNELS {
                let from = prev.as_ref().map_or(target[c], |p| p[c]);
                env[c][t0 + t] = spec.amplitude * ((1.0 - w) * from + w * target[c]);
            }
        }
        t0 += seg.len;
        prev = Some(target);
    }
    let limit = i16::MAX as f64;
    let mut samples = Vec::with_capacity(total * NUM_CHANNELS);
    for e in env.iter() {
        let signal = band_noise(&carrier.coeffs, carrier.gain, total, rng);
        let noise = band_noise(&carrier.coeffs, carrier.gain, total, rng);
        for t in 0..total {
            let v = e[t] * signal[t] + floor * spec.amplitude * noise[t];
            let q = (v / spec.lsb).round().clamp(-limit, limit);
            samples.push(q * spec.lsb);
        }
    }
    RawSignal::new(NUM_CHANNELS, SAMPLE_RATE_HZ, samples)
}

fn natural_intensity(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<f64> {
    if let Some(v) = spec.fixed_intensity {
        return Ok(v);
    }
    let normal = Normal::new(spec.intensity_mean, spec.intensity_std)
        .map_err(|e| Error::config("intensity_std", e.to_string()))?;
    Ok(normal.sample(rng).clamp(MIN_INTENSITY, 1.0))
}

fn level_intensity(spec: &SynthSpec, level: u8, rng: &mut ChaCha8Rng) -> f64 {
    if let Some(v) = spec.fixed_intensity {
        return v;
    }
    match level {
        1 => rng.random_range(0.08..0.22),
        2 => rng.random_range(0.27..0.43),
        _ => rng.random_range(0.50..0.90),
    }
}

/// Session-specific templates: electrode rotation then day drift.
fn session_templates(spec: &SynthSpec, base: &[Vec<f64>], participant: u32, session: u32) -> Vec<Vec<f64>> {
    let mut rng = rng_for(spec.seed, &[tag("drift-direction"), participant as u64]);
    let days = spec.day_offset(session);
    let mut placement = rng_for(spec.seed, &[tag("placement"), participant as u64, session as u64]);
    let jitter: f64 = StandardNormal.sample(&mut placement);
    let shift = spec.electrode_shift(session) + spec.placement_jitter * jitter;
    base.iter()
        .map(|row| {
            let rotated = rotate_channels(row, shift);
            rotated
                .iter()
                .map(|v| {
                    let p: f64 = StandardNormal.sample(&mut rng);
                    v * (1.0 + spec.drift_per_day * days * p).max(0.0)
                })
                .collect()
        })
        .collect()
}

fn synth_session(
    spec: &SynthSpec,
    carrier: &Carrier,
    base: &[Vec<f64>],
    participant: u32,
    session: u32,
) -> Result<SessionDataset> {
    let fs = SAMPLE_RATE_HZ;
    let days = spec.day_offset(session);
    let floor = spec.noise_level + spec.noise_growth_per_day * days;
    let templates = session_templates(spec, base, participant, session);
    let ids = [participant as u64, session as u64];
    let mut schedule = rng_for(spec.seed, &[tag("schedule"), ids[0], ids[1]]);
    let gesture_len = (spec.gesture_seconds * fs).round() as usize;
    let fade = (spec.transition_ms * fs / 1000.0).round() as usize;

    let mut cycles = Vec::new();
    for id in 1..=spec.cycles {
        let mut segments = Vec::with_capacity(NUM_GESTURES);
        let mut spans = Vec::with_capacity(NUM_GESTURES);
        for (g, template) in templates.iter().enumerate() {
            let intensity = if g == 0 || id == 2 {
                1.0
            } else {
                natural_intensity(spec, &mut schedule)?
            };
            let pattern = position_pattern(spec, template, 0.0, 0.0);
            spans.push(GestureSpan {
                gesture: g,
                start: g * gesture_len,
                len: gesture_len,
            });
            segments.push(Segment {
                pattern,
                intensity,
                len: gesture_len,
                fade: if g == 0 { 0 } else { fade.min(gesture_len) },
            });
        }
        let mut rng = rng_for(spec.seed, &[tag("carrier"), ids[0], ids[1], id as u64]);
        let signal = render(spec, carrier, &segments, floor, &mut rng)?;
        cycles.push(Cycle { id, signal, spans });
    }

    let mut runs = Vec::new();
    let trial_len = (spec.trial_seconds * fs).round() as usize;
    let reaction = (spec.reaction_ms * fs / 1000.0).round() as usize;
    for id in 1..=spec.evaluation_runs {
        let mut order: Vec<usize> = Vec::new();
        while order.len() < spec.trials_per_run {
            let mut perm: Vec<usize> = (0..NUM_GESTURES).collect();
            perm.shuffle(&mut schedule);
            order.extend(perm);
        }
        order.truncate(spec.trials_per_run);
        let mut trials = Vec::new();
        let mut segments = Vec::new();
        let frame_len = fs / spec.frame_rate;
        let total = trial_len * order.len();
        let frames = (total as f64 / frame_len).ceil() as usize;
        let mut orientation = Vec::with_capacity(frames);
        let mut prev_angles = (0.0, 0.0);
        for (k, &g) in order.iter().enumerate() {
            let level = if g == 0 { 1 } else { schedule.random_range(1..=3u8) };
            let pitch = schedule.random_range(-PITCH_LIMIT..=PITCH_LIMIT);
            let yaw = schedule.random_range(-YAW_LIMIT..=YAW_LIMIT);
            let intensity = if g == 0 {
                1.0
            } else {
                level_intensity(spec, level, &mut schedule)
            };
            trials.push(Trial {
                gesture: g,
                level,
                pitch,
                yaw,
                start: k * trial_len,
                len: trial_len,
            });
            segments.push((g, intensity, pitch, yaw, prev_angles));
            prev_angles = (pitch, yaw);
        }
        // The limb reaches the requested orientation over the reaction time;
        // the pattern follows the orientation frame by frame.
        let mut noise = rng_for(spec.seed, &[tag("orientation"), ids[0], ids[1], id as u64]);
        let jitter = Normal::new(0.0, 1.5).expect("valid sd");
        for f in 0..frames {
            let t = (f as f64 * frame_len) as usize;
            let k = (t / trial_len).min(order.len() - 1);
            let (_, _, pitch, yaw, (p0, y0)) = segments[k];
            let since = (t - k * trial_len) as f64;
            let w = if reaction == 0 {
                1.0
            } else {
                (since / reaction as f64).min(1.0)
            };
            let w = w * w * (3.0 - 2.0 * w);
            let p = (p0 + w * (pitch - p0) + jitter.sample(&mut noise)).clamp(-PITCH_LIMIT, PITCH_LIMIT);
            let y = (y0 + w * (yaw - y0) + jitter.sample(&mut noise)).clamp(-YAW_LIMIT, YAW_LIMIT);
            orientation.push((p, y));
        }
        let mut rendered = Vec::new();
        let frame_samples = frame_len.round().max(1.0) as usize;
        for (k, &(g, intensity, _, _, _)) in segments.iter().enumerate() {
            let mut t = 0;
            while t < trial_len {
                let len = frame_samples.min(trial_len - t);
                let abs = k * trial_len + t;
                let frame = ((abs as f64 / frame_len) as usize).min(frames - 1);
                let (p, y) = orientation[frame];
                // the previous gesture fades out over the reaction time
                let w = if reaction == 0 {
                    1.0
                } else {
                    ((t + len) as f64 / reaction as f64).min(1.0)
                };
                let (prev_g, prev_i) = if k > 0 {
                    (segments[k - 1].0, segments[k - 1].1)
                } else {
                    (g, intensity)
                };
                let cur = position_pattern(spec, &templates[g], p, y);
                let old = position_pattern(spec, &templates[prev_g], p, y);
                let pattern: Vec<f64> = cur
                    .iter()
                    .zip(&old)
                    .map(|(a, b)| w * a * intensity + (1.0 - w) * b * prev_i)
                    .collect();
                // frame-wise segments interpolate linearly from the previous frame
                rendered.push(Segment {
                    pattern,
                    intensity: 1.0,
                    len,
                    fade: len,
                });
                t += len;
            }
        }
        let mut rng = rng_for(spec.seed, &[tag("eval-carrier"), ids[0], ids[1], id as u64]);
        let signal = render(spec, carrier, &rendered, floor, &mut rng)?;
        runs.push(EvaluationRun {
            id,
            signal,
            trials,
            frame_rate: spec.frame_rate,
            orientation,
            score: None,
        });
    }

    let mut s = SessionDataset {
        participant,
        session,
        day_offset: days,
        lsb: spec.lsb,
        cycles,
        evaluation_runs: runs,
        checksum: String::new(),
    };
    s.validate()?;
    s.checksum = super::canonical::checksum_session(&s)?;
    Ok(s)
}

/// Generates every participant's sessions, ordered by participant then
/// session. A pure function of `spec`.
pub fn synthesize(spec: &SynthSpec) -> Result<Vec<SessionDataset>> {
    spec.validate()?;
    let carrier = Carrier::new()?;
    let mut out = Vec::new();
    for p in 1..=spec.num_participants {
        let base = participant_templates(spec, p)?;
        for s in 1..=spec.num_sessions {
            out.push(synth_session(spec, &carrier, &base, p, s)?);
        }
    }
    Ok(out)
}

/// Generates a single participant's sessions.
pub fn synthesize_participant(spec: &SynthSpec, participant: u32) -> Result<Vec<SessionDataset>> {
    spec.validate()?;
    let carrier = Carrier::new()?;
    let base = participant_templates(spec, participant)?;
    (1..=spec.num_sessions)
        .map(|s| synth_session(spec, &carrier, &base, participant, s))
        .collect()
}
