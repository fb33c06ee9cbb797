//! Report files derived from an accuracy table.
//!
//! Column names are stable; floats are written with Rust's shortest
//! round-trip formatting so a rerun reproduces every byte.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use semgkit::evaluation::{AccuracyRow, AccuracyTable, SchemeComparison, TestSet};
use semgkit::training::CalibrationScheme;

use crate::data::write_csv;

pub const ACCURACY_FILE: &str = "accuracy.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const COMPARISONS_FILE: &str = "comparisons.csv";
pub const REPORT_FILE: &str = "report.txt";

pub const ACCURACY_HEADER: [&str; 8] = [
    "scheme",
    "participant",
    "seed",
    "session",
    "test_set",
    "correct",
    "total",
    "accuracy",
];

pub const TEST_SETS: [TestSet; 2] = [TestSet::Offline, TestSet::Evaluation];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_accuracy(dir: &Path, table: &AccuracyTable) -> anyhow::Result<()> {
    let rows: Vec<Vec<String>> = table
        .rows()
        .into_iter()
        .map(|r| {
            vec![
                r.scheme.clone(),
                r.participant.to_string(),
                r.seed.to_string(),
                r.session.to_string(),
                r.test_set.to_string(),
                r.correct.to_string(),
                r.total.to_string(),
                r.accuracy().to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join(ACCURACY_FILE), &ACCURACY_HEADER, &rows)
}

pub fn read_accuracy(path: &Path) -> anyhow::Result<AccuracyTable> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != ACCURACY_HEADER {
        bail!(semgkit::Error::Data {
            path: path.into(),
            reason: format!("unexpected header {header:?}"),
        });
    }
    let mut table = AccuracyTable::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| semgkit::Error::Data {
            path: path.into(),
            reason: format!("row {}: bad {what}", i + 2),
        };
        let test_set = match &rec[4] {
            "offline" => TestSet::Offline,
            "evaluation" => TestSet::Evaluation,
            _ => bail!(bad("test_set")),
        };
        table.push(AccuracyRow {
            scheme: rec[0].to_string(),
            participant: rec[1].parse().map_err(|_| bad("participant"))?,
            seed: rec[2].parse().map_err(|_| bad("seed"))?,
            session: rec[3].parse().map_err(|_| bad("session"))?,
            test_set,
            correct: rec[5].parse().map_err(|_| bad("correct"))?,
            total: rec[6].parse().map_err(|_| bad("total"))?,
        })?;
    }
    Ok(table)
}

/// TADANN against Recalibration on every session where both ran.
pub fn comparisons(table: &AccuracyTable) -> Vec<(TestSet, SchemeComparison)> {
    let (a, b) = (
        CalibrationScheme::Tadann.name(),
        CalibrationScheme::Recalibration.name(),
    );
    let mut out = Vec::new();
    for set in TEST_SETS {
        for session in table.sessions() {
            let c = table.compare(a, b, session, set);
            if c.n > 0 {
                out.push((set, c));
            }
        }
    }
    out
}

/// Writes summary.csv, comparisons.csv and report.txt.
pub fn write_tables(dir: &Path, table: &AccuracyTable) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    for scheme in table.schemes() {
        for set in TEST_SETS {
            for session in table.sessions() {
                if let Some(m) = table.mean_accuracy(&scheme, session, set) {
                    let n = table.paired(&scheme, &scheme, session, set).0.len();
                    rows.push(vec![
                        scheme.clone(),
                        set.to_string(),
                        session.to_string(),
                        m.to_string(),
                        n.to_string(),
                    ]);
                }
            }
        }
    }
    write_csv(
        &dir.join(SUMMARY_FILE),
        &["scheme", "test_set", "session", "mean_accuracy", "runs"],
        &rows,
    )?;

    let rows: Vec<Vec<String>> = comparisons(table)
        .into_iter()
        .map(|(set, c)| {
            vec![
                CalibrationScheme::Tadann.name().to_string(),
                CalibrationScheme::Recalibration.name().to_string(),
                set.to_string(),
                c.session.to_string(),
                c.n.to_string(),
                c.mean_difference.to_string(),
                opt(c.dz),
                opt(c.wilcoxon.as_ref().map(|w| w.statistic)),
                opt(c.wilcoxon.as_ref().map(|w| w.p_value)),
                c.wilcoxon.as_ref().map(|w| w.exact.to_string()).unwrap_or_default(),
                c.note.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        &dir.join(COMPARISONS_FILE),
        &[
            "scheme",
            "baseline",
            "test_set",
            "session",
            "pairs",
            "mean_difference",
            "cohens_dz",
            "wilcoxon_statistic",
            "p_value",
            "exact",
            "note",
        ],
        &rows,
    )?;
    crate::data::write_file(&dir.join(REPORT_FILE), render_text(table).as_bytes())
}

/// Human-readable mean-accuracy grid plus the TADANN comparison rows.
pub fn render_text(table: &AccuracyTable) -> String {
    let sessions = table.sessions();
    let mut out = String::new();
    for set in TEST_SETS {
        let _ = writeln!(out, "mean {set} accuracy (%)");
        let _ = write!(out, "{:<22}", "scheme");
        for s in &sessions {
            let _ = write!(out, "{:>10}", format!("session {s}"));
        }
        out.push('\n');
        for scheme in table.schemes() {
            let _ = write!(out, "{scheme:<22}");
            for &s in &sessions {
                match table.mean_accuracy(&scheme, s, set) {
                    Some(m) => {
                        let _ = write!(out, "{:>10.2}", 100.0 * m);
                    }
                    None => {
                        let _ = write!(out, "{:>10}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out.push_str("tadann vs recalibration\n");
    for (set, c) in comparisons(table) {
        let p = c.wilcoxon.as_ref().map(|w| format!("{:.4}", w.p_value));
        let dz = c.dz.map(|d| format!("{d:.3}"));
        let _ = writeln!(
            out,
            "  {set:<10} session {}: n={} diff={:+.2} dz={} p={}",
            c.session,
            c.n,
            100.0 * c.mean_difference,
            dz.as_deref().unwrap_or("n/a"),
            p.as_deref().unwrap_or("n/a"),
        );
    }
    out
}
