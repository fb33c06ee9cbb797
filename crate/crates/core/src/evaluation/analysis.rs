//! Transition trimming, binned accuracies and day-to-day signal statistics.

use std::collections::BTreeMap;

use super::stats::{wilcoxon_signed_rank, Wilcoxon};
use crate::datasets::{Preprocessor, SessionDataset, WindowMeta, WindowOrigin, WindowSet};
use crate::signal::msa;
use crate::{Error, Result, NUM_GESTURES};

/// Seconds after a cue during which windows count as transitions.
pub const DEFAULT_TRIM_S: f64 = 1.5;
pub const DEFAULT_INTENSITY_BIN: f64 = 0.05;
pub const DEFAULT_ORIENTATION_GRID: f64 = 5.0;
pub const DEFAULT_MIN_COUNT: usize = 500;

/// Keeps windows that start at least `trim_s` seconds after their cue.
pub fn trim_transitions(windows: &WindowSet, trim_s: f64) -> WindowSet {
    windows.filter(|m| m.since_cue >= trim_s - 1e-9)
}

/// Indices of `meta` entries that survive trimming.
pub fn trimmed_indices(meta: &[WindowMeta], trim_s: f64) -> Vec<usize> {
    (0..meta.len())
        .filter(|&i| meta[i].since_cue >= trim_s - 1e-9)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    /// Lower edge per binned dimension.
    pub lower: Vec<f64>,
    pub width: f64,
    pub correct: usize,
    pub total: usize,
}

impl Bin {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Per-bin accuracy; bins under `min_count` are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedAnalysis {
    pub bins: Vec<Bin>,
    pub min_count: usize,
    /// Examples that fell in suppressed bins.
    pub suppressed: usize,
}

fn bin_index(v: f64, width: f64) -> i64 {
    (v / width + 1e-9).floor() as i64
}

fn collect(keys: impl Iterator<Item = (Vec<i64>, bool)>, width: f64, min_count: usize) -> BinnedAnalysis {
    let mut map: BTreeMap<Vec<i64>, (usize, usize)> = BTreeMap::new();
    for (k, ok) in keys {
        let e = map.entry(k).or_default();
        e.0 += ok as usize;
        e.1 += 1;
    }
    let mut bins = Vec::new();
    let mut suppressed = 0;
    for (k, (correct, total)) in map {
        if total < min_count {
            suppressed += total;
            continue;
        }
        bins.push(Bin {
            lower: k.iter().map(|&i| i as f64 * width).collect(),
            width,
            correct,
            total,
        });
    }
    BinnedAnalysis {
        bins,
        min_count,
        suppressed,
    }
}

fn check_lengths(n: usize, others: &[usize]) -> Result<()> {
    if others.iter().any(|&m| m != n) {
        return Err(Error::shape("binning", "per-window inputs differ in length"));
    }
    Ok(())
}

/// Accuracy per intensity-ratio bin of `bin_width`.
pub fn bin_by_intensity(correct: &[bool], ratios: &[f64], bin_width: f64) -> Result<BinnedAnalysis> {
    check_lengths(correct.len(), &[ratios.len()])?;
    if !(bin_width > 0.0) {
        return Err(Error::config("bin_width", "must be positive"));
    }
    Ok(collect(
        ratios
            .iter()
            .zip(correct)
            .map(|(&r, &ok)| (vec![bin_index(r, bin_width)], ok)),
        bin_width,
        1,
    ))
}

/// Accuracy over a square `grid`-degree (pitch, yaw) grid; bins with fewer
/// than `min_count` windows are dropped.
pub fn bin_by_orientation(
    correct: &[bool],
    pitch: &[f64],
    yaw: &[f64],
    grid: f64,
    min_count: usize,
) -> Result<BinnedAnalysis> {
    check_lengths(correct.len(), &[pitch.len(), yaw.len()])?;
    if !(grid > 0.0) {
        return Err(Error::config("grid", "must be positive"));
    }
    Ok(collect(
        pitch
            .iter()
            .zip(yaw)
            .zip(correct)
            .map(|((&p, &y), &ok)| (vec![bin_index(p, grid), bin_index(y, grid)], ok)),
        grid,
        min_count.max(1),
    ))
}

/// Accuracy by yaw only, for curves along the external-rotation axis.
pub fn bin_by_yaw(correct: &[bool], yaw: &[f64], grid: f64, min_count: usize) -> Result<BinnedAnalysis> {
    check_lengths(correct.len(), &[yaw.len()])?;
    if !(grid > 0.0) {
        return Err(Error::config("grid", "must be positive"));
    }
    Ok(collect(
        yaw.iter().zip(correct).map(|(&y, &ok)| (vec![bin_index(y, grid)], ok)),
        grid,
        min_count.max(1),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayStats {
    pub participant: u32,
    pub session: u32,
    pub day: f64,
    /// Per-gesture mean window MAV, training cycles (cycle 2 excluded).
    pub training_mav: Vec<f64>,
    pub evaluation_mav: Vec<f64>,
    pub training_msa: Option<f64>,
    pub evaluation_msa: Option<f64>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

impl DayStats {
    pub fn training_mav_summary(&self) -> (f64, f64) {
        mean_sd(&self.training_mav)
    }

    pub fn evaluation_mav_summary(&self) -> (f64, f64) {
        mean_sd(&self.evaluation_mav)
    }
}

/// Outcome of the first-vs-last day comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum DayComparison {
    Tested(Wilcoxon),
    /// Every paired difference is zero.
    NoChange,
    Insufficient(String),
}

fn compare(a: &[f64], b: &[f64]) -> DayComparison {
    match wilcoxon_signed_rank(a, b) {
        Ok(w) => DayComparison::Tested(w),
        Err(Error::Degenerate(_)) => DayComparison::NoChange,
        Err(e) => DayComparison::Insufficient(e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayReport {
    pub days: Vec<DayStats>,
    /// Per (participant, gesture) training MAV, first vs last session.
    pub training_mav: DayComparison,
    pub evaluation_mav: DayComparison,
}

fn per_gesture(set: &WindowSet, keep: impl Fn(&WindowMeta) -> bool) -> (Vec<f64>, Option<f64>) {
    let mut mavs = vec![Vec::new(); NUM_GESTURES];
    let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); NUM_GESTURES];
    let w = set.len;
    for i in 0..set.count() {
        let m = &set.meta[i];
        if !keep(m) {
            continue;
        }
        mavs[m.label].push(m.mav);
        let x = set.window(i);
        rows[m.label].push(
            (0..set.channels)
                .map(|c| x[c * w..(c + 1) * w].iter().map(|v| v.abs() as f64).sum::<f64>() / w as f64)
                .collect(),
        );
    }
    let mav = mavs
        .iter()
        .map(|v| {
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        })
        .collect();
    let msas: Vec<f64> = rows.iter().filter_map(|r| msa(r).ok()).map(|m| m.value).collect();
    let msa_mean = (!msas.is_empty()).then(|| msas.iter().sum::<f64>() / msas.len() as f64);
    (mav, msa_mean)
}

/// Per-session MAV (per gesture) and MSA (mean over gestures of the MSA of
/// the per-channel MAV cloud) for training cycles and evaluation runs, then a
/// paired Wilcoxon test of first- vs last-session values over
/// (participant, gesture) pairs. Cycle 2 is excluded.
pub fn mav_msa_day_report(sessions: &[SessionDataset], pre: &Preprocessor) -> Result<DayReport> {
    if sessions.len() < 2 {
        return Err(Error::Insufficient("day report needs at least two sessions".into()));
    }
    let mut days = Vec::new();
    for s in sessions {
        let set = pre.session(s, None)?;
        let (training_mav, training_msa) = per_gesture(&set, |m| matches!(m.origin, WindowOrigin::Cycle(c) if c != 2));
        let (evaluation_mav, evaluation_msa) =
            per_gesture(&set, |m| matches!(m.origin, WindowOrigin::Evaluation { .. }));
        days.push(DayStats {
            participant: s.participant,
            session: s.session,
            day: s.day_offset,
            training_mav,
            evaluation_mav,
            training_msa,
            evaluation_msa,
        });
    }
    let mut pairs = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut participants: Vec<u32> = days.iter().map(|d| d.participant).collect();
    participants.dedup();
    for p in participants {
        let mine: Vec<&DayStats> = days.iter().filter(|d| d.participant == p).collect();
        if mine.len() < 2 {
            continue;
        }
        let (first, last) = (mine[0], mine[mine.len() - 1]);
        for g in 0..NUM_GESTURES {
            let (a, b) = (first.training_mav[g], last.training_mav[g]);
            if a.is_finite() && b.is_finite() {
                pairs.0.push(a);
                pairs.1.push(b);
            }
            let (a, b) = (first.evaluation_mav[g], last.evaluation_mav[g]);
            if a.is_finite() && b.is_finite() {
                pairs.2.push(a);
                pairs.3.push(b);
            }
        }
    }
    Ok(DayReport {
        days,
        training_mav: compare(&pairs.1, &pairs.0),
        evaluation_mav: compare(&pairs.3, &pairs.2),
    })
}
