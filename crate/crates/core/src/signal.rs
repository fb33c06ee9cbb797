//! Deterministic sEMG preprocessing: Butterworth band-pass design as cascaded
//! second-order sections, causal filtering, sliding windows and the MAV/MSA
//! amplitude and pattern-variability summaries.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Multichannel signal stored channel-major: `samples[c * len + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSignal {
    channels: usize,
    len: usize,
    sample_rate: f64,
    samples: Vec<f64>,
}

impl RawSignal {
    pub fn new(channels: usize, sample_rate: f64, samples: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::config("channels", "must be at least 1"));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::config("sample_rate", format!("{sample_rate} is not positive")));
        }
        if !samples.len().is_multiple_of(channels) {
            return Err(Error::shape(
                "RawSignal::new",
                format!("{} samples do not split into {channels} channels", samples.len()),
            ));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFault { op: "RawSignal::new" });
        }
        let len = samples.len() / channels;
        Ok(Self {
            channels,
            len,
            sample_rate,
            samples,
        })
    }

    pub fn zeros(channels: usize, len: usize, sample_rate: f64) -> Self {
        Self {
            channels,
            len,
            sample_rate,
            samples: vec![0.0; channels * len],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.samples[c * self.len..(c + 1) * self.len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.samples[c * self.len..(c + 1) * self.len]
    }

    /// Copies `len` samples of every channel starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> Result<RawSignal> {
        if start + len > self.len {
            return Err(Error::shape(
                "RawSignal::slice",
                format!("[{start}, {}) exceeds length {}", start + len, self.len),
            ));
        }
        let mut samples = Vec::with_capacity(self.channels * len);
        for c in 0..self.channels {
            samples.extend_from_slice(&self.channel(c)[start..start + len]);
        }
        Ok(RawSignal {
            channels: self.channels,
            len,
            sample_rate: self.sample_rate,
            samples,
        })
    }

    pub fn scaled(&self, factor: f64) -> RawSignal {
        RawSignal {
            samples: self.samples.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub low_cut: f64,
    pub high_cut: f64,
    /// Analog prototype order; the band-pass has twice as many poles.
    pub order: usize,
    pub sample_rate: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            low_cut: 20.0,
            high_cut: 495.0,
            order: 4,
            sample_rate: crate::SAMPLE_RATE_HZ,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate / 2.0;
        if self.order == 0 {
            return Err(Error::FilterDesign("order must be at least 1".into()));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::FilterDesign(format!(
                "sample rate {} is not positive",
                self.sample_rate
            )));
        }
        if !(self.low_cut > 0.0 && self.low_cut < self.high_cut) {
            return Err(Error::FilterDesign(format!(
                "need 0 < low_cut < high_cut, got {} and {}",
                self.low_cut, self.high_cut
            )));
        }
        if self.high_cut >= nyquist {
            return Err(Error::FilterDesign(format!(
                "high_cut {} Hz is not below the Nyquist frequency {} Hz",
                self.high_cut, nyquist
            )));
        }
        Ok(())
    }
}

/// One biquad, `a[0]` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderSection {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl SecondOrderSection {
    fn response(&self, z_inv: Complex<f64>) -> Complex<f64> {
        let z2 = z_inv * z_inv;
        let num = Complex::new(self.b[0], 0.0) + z_inv * self.b[1] + z2 * self.b[2];
        let den = Complex::new(self.a[0], 0.0) + z_inv * self.a[1] + z2 * self.a[2];
        num / den
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    pub sections: Vec<SecondOrderSection>,
    pub sample_rate: f64,
}

impl FilterCoefficients {
    /// Linear magnitude of the frequency response at `freq` Hz.
    pub fn gain_at(&self, freq: f64) -> f64 {
        let w = 2.0 * PI * freq / self.sample_rate;
        let z_inv = Complex::new(w.cos(), -w.sin());
        self.sections
            .iter()
            .fold(Complex::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
            .norm()
    }

    /// Sum of squared impulse-response taps over `len` samples, i.e. the
    /// output power for unit-variance white input.
    pub fn noise_power_gain(&self, len: usize) -> f64 {
        let mut state = vec![[0.0; 2]; self.sections.len()];
        (0..len)
            .map(|t| {
                let x = if t == 0 { 1.0 } else { 0.0 };
                let y = run_sections(&self.sections, &mut state, x);
                y * y
            })
            .sum()
    }
}

fn bilinear(s: Complex<f64>, fs2: f64) -> Complex<f64> {
    (Complex::new(fs2, 0.0) + s) / (Complex::new(fs2, 0.0) - s)
}

/// Groups z-plane poles into conjugate pairs; leftover real poles are paired
/// with each other.
fn pair_poles(poles: &[Complex<f64>]) -> Vec<(Complex<f64>, Complex<f64>)> {
    const IMAG_EPS: f64 = 1e-12;
    let mut pairs = Vec::new();
    let mut reals = Vec::new();
    for &p in poles {
        if p.im > IMAG_EPS {
            pairs.push((p, p.conj()));
        } else if p.im.abs() <= IMAG_EPS {
            reals.push(Complex::new(p.re, 0.0));
        }
    }
    reals.sort_by(|a, b| a.re.total_cmp(&b.re));
    for chunk in reals.chunks(2) {
        let second = chunk.get(1).copied().unwrap_or(Complex::new(0.0, 0.0));
        pairs.push((chunk[0], second));
    }
    pairs
}

/// Butterworth band-pass by bilinear transform with pre-warped band edges.
///
/// The analog low-pass prototype of order `N` is mapped to a band-pass with
/// `2N` poles, `N` zeros at DC and `N` at Nyquist. Each returned section holds
/// one conjugate pole pair and the zero pair `(+1, -1)`; the passband gain is
/// normalized to 1 at the geometric center frequency.
pub fn design_bandpass(spec: &FilterSpec) -> Result<FilterCoefficients> {
    spec.validate()?;
    let n = spec.order;
    let fs2 = 2.0 * spec.sample_rate;
    let w_low = fs2 * (PI * spec.low_cut / spec.sample_rate).tan();
    let w_high = fs2 * (PI * spec.high_cut / spec.sample_rate).tan();
    let bandwidth = w_high - w_low;
    let w0_sq = w_low * w_high;

    let mut z_poles = Vec::with_capacity(2 * n);
    for k in 0..n {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let proto = Complex::new(theta.cos(), theta.sin());
        let half = proto * (bandwidth / 2.0);
        let disc = (half * half - Complex::new(w0_sq, 0.0)).sqrt();
        for s in [half + disc, half - disc] {
            z_poles.push(bilinear(s, fs2));
        }
    }

    let pairs = pair_poles(&z_poles);
    if pairs.len() != n {
        return Err(Error::FilterDesign(format!(
            "expected {n} pole pairs, found {}",
            pairs.len()
        )));
    }
    let sections: Vec<SecondOrderSection> = pairs
        .into_iter()
        .map(|(p1, p2)| {
            let sum = p1 + p2;
            let prod = p1 * p2;
            SecondOrderSection {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -sum.re, prod.re],
            }
        })
        .collect();

    let mut coeffs = FilterCoefficients {
        sections,
        sample_rate: spec.sample_rate,
    };
    let center = (w0_sq.sqrt() / fs2).atan() * spec.sample_rate / PI;
    let g = coeffs.gain_at(center);
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::FilterDesign(format!("passband gain {g} at {center} Hz")));
    }
    for b in coeffs.sections[0].b.iter_mut() {
        *b /= g;
    }
    Ok(coeffs)
}

#[inline]
fn run_sections(sections: &[SecondOrderSection], state: &mut [[f64; 2]], x: f64) -> f64 {
    // transposed direct form II
    let mut v = x;
    for (s, st) in sections.iter().zip(state.iter_mut()) {
        let y = s.b[0] * v + st[0];
        st[0] = s.b[1] * v - s.a[1] * y + st[1];
        st[1] = s.b[2] * v - s.a[2] * y;
        v = y;
    }
    v
}

/// Applies the section cascade to one channel from a zero initial state.
pub fn filter_channel(coeffs: &FilterCoefficients, input: &[f64]) -> Vec<f64> {
    let mut state = vec![[0.0; 2]; coeffs.sections.len()];
    input
        .iter()
        .map(|&x| run_sections(&coeffs.sections, &mut state, x))
        .collect()
}

/// Forward-only filtering of every channel; output at `t` depends only on
/// inputs at times `<= t`.
pub fn filter_causal(signal: &RawSignal, coeffs: &FilterCoefficients) -> Result<RawSignal> {
    if signal.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFault { op: "filter_causal" });
    }
    let mut out = Vec::with_capacity(signal.samples.len());
    for c in 0..signal.channels {
        out.extend(filter_channel(coeffs, signal.channel(c)));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFault { op: "filter_causal" });
    }
    Ok(RawSignal {
        samples: out,
        ..signal.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub window_ms: f64,
    pub overlap_ms: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window_ms: 150.0,
            overlap_ms: 100.0,
        }
    }
}

impl WindowSpec {
    pub fn stride_ms(&self) -> f64 {
        self.window_ms - self.overlap_ms
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.overlap_ms >= 0.0 && self.overlap_ms < self.window_ms) {
            return Err(Error::config(
                "overlap_ms",
                format!(
                    "need 0 <= overlap < window, got {} / {}",
                    self.overlap_ms, self.window_ms
                ),
            ));
        }
        Ok(())
    }

    /// Window and stride lengths in samples.
    pub fn in_samples(&self, sample_rate: f64) -> Result<(usize, usize)> {
        self.validate()?;
        let w = (self.window_ms * sample_rate / 1000.0).round() as usize;
        let s = (self.stride_ms() * sample_rate / 1000.0).round() as usize;
        if w == 0 || s == 0 {
            return Err(Error::config(
                "window_ms",
                format!("window {w} / stride {s} samples at {sample_rate} Hz"),
            ));
        }
        Ok((w, s))
    }
}

/// Number of full windows: `floor((T - W) / S) + 1`, or 0 when `T < W`.
pub fn window_count(total: usize, window: usize, stride: usize) -> usize {
    if total < window || window == 0 || stride == 0 {
        0
    } else {
        (total - window) / stride + 1
    }
}

/// Start offsets of every full window, in temporal order.
pub fn window_starts(total: usize, window: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..window_count(total, window, stride)).map(move |i| i * stride)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: usize,
    pub data: RawSignal,
}

/// Cuts the signal into full windows; a trailing partial window is dropped.
pub fn segment_windows(signal: &RawSignal, spec: &WindowSpec) -> Result<Vec<Window>> {
    let (w, s) = spec.in_samples(signal.sample_rate)?;
    window_starts(signal.len, w, s)
        .map(|start| {
            Ok(Window {
                start,
                data: signal.slice(start, w)?,
            })
        })
        .collect()
}

/// Per-channel mean absolute value.
pub fn mav(window: &RawSignal) -> Result<Vec<f64>> {
    if window.is_empty() {
        return Err(Error::shape("mav", "empty window"));
    }
    Ok((0..window.channels)
        .map(|c| window.channel(c).iter().map(|v| v.abs()).sum::<f64>() / window.len as f64)
        .collect())
}

/// Mean of the per-channel MAVs.
pub fn mav_scalar(window: &RawSignal) -> Result<f64> {
    let per_channel = mav(window)?;
    Ok(per_channel.iter().sum::<f64>() / per_channel.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Msa {
    pub value: f64,
    /// Set when the covariance is rank deficient; `value` is then 0.
    pub degenerate: bool,
}

/// Mean semi-principal axis of a feature cloud: the geometric mean of the
/// square roots of the covariance eigenvalues (sample covariance, `N - 1`).
pub fn msa(rows: &[Vec<f64>]) -> Result<Msa> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if d == 0 || n <= d {
        return Err(Error::Insufficient(format!("msa needs N > D, got N={n}, D={d}")));
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::shape("msa", "ragged feature rows"));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let max = eig.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= 0.0 || min <= max * 1e-12 {
        return Ok(Msa {
            value: 0.0,
            degenerate: true,
        });
    }
    // geometric mean of sqrt(eigenvalue), taken in log space
    let log_mean = eig.iter().map(|l| 0.5 * l.ln()).sum::<f64>() / d as f64;
    Ok(Msa {
        value: log_mean.exp(),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_filter() -> FilterCoefficients {
        design_bandpass(&FilterSpec::default()).unwrap()
    }

    /// |H|^2 = 1 / (1 + ((W^2 - W0^2) / (W * B))^(2N)) on the pre-warped axis.
    fn analytic_gain(spec: &FilterSpec, f: f64) -> f64 {
        let fs2 = 2.0 * spec.sample_rate;
        let warp = |x: f64| fs2 * (PI * x / spec.sample_rate).tan();
        let (wl, wh, w) = (warp(spec.low_cut), warp(spec.high_cut), warp(f));
        let ratio = (w * w - wl * wh) / (w * (wh - wl));
        1.0 / (1.0 + ratio.powi(2 * spec.order as i32)).sqrt()
    }

    #[test]
    fn bandpass_rejects_dc_and_passes_center() {
        let coeffs = default_filter();
        assert_eq!(coeffs.sections.len(), 4);
        assert!(coeffs.gain_at(0.0) <= 1e-6);
        assert!((coeffs.gain_at(250.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn bandpass_matches_analytic_response() {
        let spec = FilterSpec::default();
        let coeffs = design_bandpass(&spec).unwrap();
        for f in [5.0, 10.0, 20.0, 40.0, 100.0, 250.0, 400.0, 480.0, 495.0, 499.0] {
            let got = coeffs.gain_at(f);
            let want = analytic_gain(&spec, f);
            assert!((got - want).abs() < 1e-6 * want.max(1e-3), "f={f}: {got} vs {want}");
        }
    }

    #[test]
    fn low_frequency_rolloff() {
        let g = default_filter().gain_at(5.0);
        let asymptote = (5.0f64 / 20.0).powi(4);
        assert!(g <= 2.0 * asymptote && g >= asymptote / 2.0, "gain {g}");
    }

    #[test]
    fn odd_order_design_is_valid() {
        let spec = FilterSpec {
            order: 3,
            ..FilterSpec::default()
        };
        let coeffs = design_bandpass(&spec).unwrap();
        assert_eq!(coeffs.sections.len(), 3);
        for f in [10.0, 100.0, 300.0] {
            assert!((coeffs.gain_at(f) - analytic_gain(&spec, f)).abs() < 1e-6);
        }
    }

    #[test]
    fn nyquist_edge_is_rejected() {
        let spec = FilterSpec {
            high_cut: 500.0,
            ..FilterSpec::default()
        };
        assert!(matches!(design_bandpass(&spec), Err(Error::FilterDesign(_))));
        let spec = FilterSpec {
            low_cut: 0.0,
            ..FilterSpec::default()
        };
        assert!(design_bandpass(&spec).is_err());
    }

    #[test]
    fn constant_input_decays() {
        let coeffs = default_filter();
        let y = filter_channel(&coeffs, &vec![7.3; 4000]);
        assert!(y[1000..].iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn zero_in_zero_out() {
        let s = RawSignal::zeros(10, 500, 1000.0);
        let out = filter_causal(&s, &default_filter()).unwrap();
        assert!(out.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_at_center_keeps_amplitude() {
        let coeffs = default_filter();
        let x: Vec<f64> = (0..4000)
            .map(|t| (2.0 * PI * 250.0 * t as f64 / 1000.0 + 0.3).sin())
            .collect();
        let y = filter_channel(&coeffs, &x);
        // 4 samples per period miss the crest, so measure amplitude via RMS
        let tail = &y[2000..];
        let amp = (2.0 * tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt();
        assert!((amp - 1.0).abs() < 0.01, "amplitude {amp}");
    }

    #[test]
    fn non_finite_input_faults() {
        let mut samples = vec![0.0; 20];
        samples[3] = 1.0;
        let mut s = RawSignal::new(2, 1000.0, samples).unwrap();
        s.samples[5] = f64::NAN;
        assert!(filter_causal(&s, &default_filter()).unwrap_err().is_numerical());
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_count(5000, 150, 50), 98);
        assert_eq!(window_count(150, 150, 50), 1);
        assert_eq!(window_count(149, 150, 50), 0);
        let s = RawSignal::zeros(10, 5000, 1000.0);
        let w = segment_windows(&s, &WindowSpec::default()).unwrap();
        assert_eq!(w.len(), 98);
        assert_eq!(w[1].start, 50);
        assert_eq!(w[0].data.len(), 150);
    }

    #[test]
    fn windows_are_contiguous_views() {
        let data: Vec<f64> = (0..2 * 400).map(|v| v as f64).collect();
        let s = RawSignal::new(2, 1000.0, data).unwrap();
        let w = segment_windows(&s, &WindowSpec::default()).unwrap();
        for win in &w {
            for c in 0..2 {
                let expect: Vec<f64> = s.channel(c)[win.start..win.start + 150].to_vec();
                assert_eq!(win.data.channel(c), expect.as_slice());
            }
        }
    }

    #[test]
    fn mav_examples() {
        let one = |v: Vec<f64>| RawSignal::new(1, 1000.0, v).unwrap();
        assert_eq!(mav_scalar(&one(vec![1.0, -1.0, 1.0, -1.0])).unwrap(), 1.0);
        assert_eq!(mav_scalar(&one(vec![0.0, 3.0, -3.0, 0.0])).unwrap(), 1.5);
        assert_eq!(mav_scalar(&one(vec![0.0; 4])).unwrap(), 0.0);
        assert!(mav(&RawSignal::zeros(1, 0, 1000.0)).is_err());
    }

    #[test]
    fn msa_unit_circle() {
        let n = 64;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        // per-axis sample variance of evenly spaced points on the circle
        let sigma = (n as f64 / (2.0 * (n as f64 - 1.0))).sqrt();
        let m = msa(&rows).unwrap();
        assert!(!m.degenerate);
        assert!((m.value - sigma).abs() < 1e-12);
    }

    #[test]
    fn msa_degenerate_cloud() {
        let rows = vec![vec![1.0, 2.0, 3.0]; 10];
        let m = msa(&rows).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.value, 0.0);
        assert!(msa(&rows[..3]).is_err());
    }

    proptest! {
        #[test]
        fn count_formula_matches_enumeration(t in 0usize..=1000, w in 1usize..=200, s_frac in 0.0f64..1.0) {
            let s = 1 + ((w - 1) as f64 * s_frac) as usize;
            let mut brute = 0;
            let mut start = 0;
            while start + w <= t {
                brute += 1;
                start += s;
            }
            prop_assert_eq!(window_count(t, w, s), brute);
        }

        #[test]
        fn mav_scales_with_magnitude(c in -20.0f64..20.0, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..30).map(|_| rng.random_range(-5.0..5.0)).collect();
            let s = RawSignal::new(3, 1000.0, x).unwrap();
            let a = mav(&s.scaled(c)).unwrap();
            let b = mav(&s).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - c.abs() * v).abs() <= 1e-12 * (1.0 + u.abs()));
            }
        }

        #[test]
        fn filter_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let coeffs = default_filter();
            let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let fx = filter_channel(&coeffs, &x);
            let fy = filter_channel(&coeffs, &y);
            let fm = filter_channel(&coeffs, &mix);
            let scale = fm.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for t in 0..300 {
                prop_assert!((fm[t] - (a * fx[t] + b * fy[t])).abs() <= 1e-9 * scale);
            }
        }

        #[test]
        fn filter_is_time_invariant(k in 1usize..100, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let coeffs = default_filter();
            let x: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut shifted = vec![0.0; k];
            shifted.extend_from_slice(&x);
            let fx = filter_channel(&coeffs, &x);
            let fs = filter_channel(&coeffs, &shifted);
            for t in 0..400 {
                prop_assert!((fs[t + k] - fx[t]).abs() <= 1e-12);
            }
        }

        #[test]
        fn msa_is_rotation_invariant(angle in 0.0f64..std::f64::consts::TAU, seed in any::<u64>()) {
            use rand::SeedableRng;
            use rand_distr::{Distribution, StandardNormal};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..50)
                .map(|_| {
                    let v: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
                    vec![v[0] * 2.0, v[1], v[2] * 0.5 + v[0] * 0.3]
                })
                .collect();
            let (c, s) = (angle.cos(), angle.sin());
            let rotated: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| vec![c * r[0] - s * r[1], s * r[0] + c * r[1], r[2]])
                .collect();
            let a = msa(&rows).unwrap().value;
            let b = msa(&rotated).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }
    }
}
