//! Best-effort import of recordings exported as CSV.
//!
//! Expected layout (any `participant_<P>/session_<S>` directory names with
//! decimal numbers):
//!
//! ```text
//! participant_01/session_01/
//!   session.toml      optional: day_offset = 14.0, [scores] "1" = 0.8
//!   cycle_1.csv       ch0..ch9,gesture               (one row per sample)
//!   eval_1.csv        ch0..ch9,gesture,level,pitch,yaw
//! ```
//!
//! Samples are in volts at 1 kHz. Gesture spans and evaluation trials are
//! the maximal runs of constant labels. Samples are re-quantized to 16 bits
//! with a per-session step.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use semgkit::datasets::{checksum_session, Cycle, EvaluationRun, GestureSpan, SessionDataset, Trial};
use semgkit::signal::RawSignal;
use semgkit::{NUM_CHANNELS, SAMPLE_RATE_HZ};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SessionInfo {
    day_offset: Option<f64>,
    scores: BTreeMap<String, f64>,
}

fn data_error(path: &Path, reason: impl Into<String>) -> anyhow::Error {
    semgkit::Error::Data {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
    .into()
}

fn numbered(dir: &Path, prefix: &str, suffix: &str) -> anyhow::Result<Vec<(u32, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if let Some(num) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(suffix)) {
            if let Ok(n) = num.parse::<u32>() {
                out.push((n, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Rows of a CSV: channel samples plus the trailing label columns.
struct Table {
    samples: Vec<f64>,
    labels: Vec<Vec<f64>>,
}

fn read_table(path: &Path, extra: &[&str]) -> anyhow::Result<Table> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let expected: Vec<String> = (0..NUM_CHANNELS)
        .map(|c| format!("ch{c}"))
        .chain(extra.iter().map(|s| s.to_string()))
        .collect();
    if header != expected {
        return Err(data_error(path, format!("expected header {}", expected.join(","))));
    }
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let values: Vec<f64> = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| data_error(path, format!("row {}: not a number", i + 2)))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(data_error(path, format!("row {}: non-finite value", i + 2)));
        }
        samples.extend_from_slice(&values[..NUM_CHANNELS]);
        labels.push(values[NUM_CHANNELS..].to_vec());
    }
    if labels.is_empty() {
        return Err(data_error(path, "no samples"));
    }
    Ok(Table { samples, labels })
}

/// Maximal runs of equal label rows as (start, len).
fn runs(labels: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some((s, n)) if labels[*s] == *l => *n += 1,
            _ => out.push((i, 1)),
        }
    }
    out
}

fn gesture(path: &Path, v: f64) -> anyhow::Result<usize> {
    if v.fract() != 0.0 || !(0.0..semgkit::NUM_GESTURES as f64).contains(&v) {
        return Err(data_error(
            path,
            format!("gesture label {v} is not in 0..{}", semgkit::NUM_GESTURES),
        ));
    }
    Ok(v as usize)
}

/// CSV rows are sample-major; signals are stored channel-major.
fn to_signal(rows: Vec<f64>) -> anyhow::Result<RawSignal> {
    let len = rows.len() / NUM_CHANNELS;
    let mut samples = vec![0.0; rows.len()];
    for (t, row) in rows.chunks(NUM_CHANNELS).enumerate() {
        for (c, &v) in row.iter().enumerate() {
            samples[c * len + t] = v;
        }
    }
    Ok(RawSignal::new(NUM_CHANNELS, SAMPLE_RATE_HZ, samples)?)
}

fn quantize(signal: &RawSignal, lsb: f64) -> anyhow::Result<RawSignal> {
    let q = signal.samples().iter().map(|v| (v / lsb).round() * lsb).collect();
    Ok(RawSignal::new(signal.channels(), signal.sample_rate(), q)?)
}

fn import_session(dir: &Path, participant: u32, session: u32) -> anyhow::Result<SessionDataset> {
    let info: SessionInfo = match fs::read_to_string(dir.join("session.toml")) {
        Ok(text) => toml::from_str(&text).map_err(|e| data_error(&dir.join("session.toml"), e.to_string()))?,
        Err(_) => SessionInfo::default(),
    };
    let mut cycles = Vec::new();
    for (id, path) in numbered(dir, "cycle_", ".csv")? {
        let t = read_table(&path, &["gesture"])?;
        let spans = runs(&t.labels)
            .into_iter()
            .map(|(start, len)| {
                Ok(GestureSpan {
                    gesture: gesture(&path, t.labels[start][0])?,
                    start,
                    len,
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        cycles.push(Cycle {
            id,
            signal: to_signal(t.samples)?,
            spans,
        });
    }
    let mut evaluation_runs = Vec::new();
    for (id, path) in numbered(dir, "eval_", ".csv")? {
        let t = read_table(&path, &["gesture", "level", "pitch", "yaw"])?;
        let orientation: Vec<(f64, f64)> = t.labels.iter().map(|l| (l[2], l[3])).collect();
        let keys: Vec<Vec<f64>> = t.labels.iter().map(|l| l[..2].to_vec()).collect();
        let mut trials = Vec::new();
        for (start, len) in runs(&keys) {
            let level = keys[start][1];
            if !(1.0..=3.0).contains(&level) || level.fract() != 0.0 {
                return Err(data_error(&path, format!("intensity level {level} is not 1, 2 or 3")));
            }
            trials.push(Trial {
                gesture: gesture(&path, keys[start][0])?,
                level: level as u8,
                pitch: orientation[start].0,
                yaw: orientation[start].1,
                start,
                len,
            });
        }
        evaluation_runs.push(EvaluationRun {
            id,
            signal: to_signal(t.samples)?,
            trials,
            frame_rate: SAMPLE_RATE_HZ,
            orientation,
            score: info.scores.get(&id.to_string()).copied(),
        });
    }
    if cycles.is_empty() {
        return Err(data_error(dir, "no cycle_<k>.csv files"));
    }
    let peak = cycles
        .iter()
        .map(|c| &c.signal)
        .chain(evaluation_runs.iter().map(|r| &r.signal))
        .flat_map(|s| s.samples().iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let lsb = if peak > 0.0 { peak / i16::MAX as f64 } else { 1.0 };
    for c in &mut cycles {
        c.signal = quantize(&c.signal, lsb)?;
    }
    for r in &mut evaluation_runs {
        r.signal = quantize(&r.signal, lsb)?;
    }
    let mut s = SessionDataset {
        participant,
        session,
        day_offset: info.day_offset.unwrap_or(0.0),
        lsb,
        cycles,
        evaluation_runs,
        checksum: String::new(),
    };
    s.validate()?;
    s.checksum = checksum_session(&s)?;
    Ok(s)
}

/// Reads every session under `source` in participant then session order.
pub fn import_csv_tree(source: &Path) -> anyhow::Result<Vec<SessionDataset>> {
    if !source.is_dir() {
        bail!(data_error(source, "source directory does not exist"));
    }
    let mut sessions = Vec::new();
    for (p, pdir) in numbered(source, "participant_", "")? {
        for (s, sdir) in numbered(&pdir, "session_", "")? {
            sessions.push(import_session(&sdir, p, s).with_context(|| format!("importing {}", sdir.display()))?);
        }
    }
    if sessions.is_empty() {
        bail!(data_error(source, "no participant_*/session_* directories"));
    }
    Ok(sessions)
}
