use std::collections::BTreeMap;
use std::fmt;

use super::stats::{cohens_dz, wilcoxon_signed_rank, Wilcoxon};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TestSet {
    /// Held-out cycle of the training session.
    Offline,
    /// Evaluation-run windows.
    Evaluation,
}

impl fmt::Display for TestSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestSet::Offline => "offline",
            TestSet::Evaluation => "evaluation",
        })
    }
}

/// One scheme × session × participant × seed result.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub scheme: String,
    pub session: u32,
    pub participant: u32,
    pub seed: u64,
    pub test_set: TestSet,
    pub correct: usize,
    pub total: usize,
}

impl AccuracyRow {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccuracyTable {
    rows: Vec<AccuracyRow>,
}

/// Paired comparison of two schemes on one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeComparison {
    pub session: u32,
    pub n: usize,
    pub mean_difference: f64,
    pub dz: Option<f64>,
    pub wilcoxon: Option<Wilcoxon>,
    /// Why a statistic is missing.
    pub note: Option<String>,
}

impl AccuracyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: AccuracyRow) -> Result<()> {
        if row.total == 0 || row.correct > row.total {
            return Err(Error::Insufficient(format!(
                "accuracy row with {} of {} correct",
                row.correct, row.total
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Rows in a canonical order (scheme, session, participant, seed, set).
    pub fn rows(&self) -> Vec<&AccuracyRow> {
        let mut rows: Vec<&AccuracyRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            (&a.scheme, a.session, a.participant, a.seed, a.test_set).cmp(&(
                &b.scheme,
                b.session,
                b.participant,
                b.seed,
                b.test_set,
            ))
        });
        rows
    }

    fn select(&self, scheme: &str, session: u32, set: TestSet) -> BTreeMap<(u32, u64), f64> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme && r.session == session && r.test_set == set)
            .map(|r| ((r.participant, r.seed), r.accuracy()))
            .collect()
    }

    /// Mean of per-participant accuracies.
    pub fn mean_accuracy(&self, scheme: &str, session: u32, set: TestSet) -> Option<f64> {
        let v = self.select(scheme, session, set);
        (!v.is_empty()).then(|| v.values().sum::<f64>() / v.len() as f64)
    }

    pub fn sessions(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.rows.iter().map(|r| r.session).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn schemes(&self) -> Vec<String> {
        let mut s: Vec<String> = self.rows.iter().map(|r| r.scheme.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Accuracies of `a` and `b` paired by (participant, seed).
    pub fn paired(&self, a: &str, b: &str, session: u32, set: TestSet) -> (Vec<f64>, Vec<f64>) {
        let (xa, xb) = (self.select(a, session, set), self.select(b, session, set));
        xa.iter().filter_map(|(k, va)| xb.get(k).map(|vb| (*va, *vb))).unzip()
    }

    /// Cohen's dz and Wilcoxon of `a − b` on one session.
    pub fn compare(&self, a: &str, b: &str, session: u32, set: TestSet) -> SchemeComparison {
        let (xa, xb) = self.paired(a, b, session, set);
        let n = xa.len();
        let mean_difference = if n == 0 {
            f64::NAN
        } else {
            xa.iter().zip(&xb).map(|(x, y)| x - y).sum::<f64>() / n as f64
        };
        let mut notes = Vec::new();
        let dz = cohens_dz(&xa, &xb).map_err(|e| notes.push(format!("dz: {e}"))).ok();
        let wilcoxon = wilcoxon_signed_rank(&xa, &xb)
            .map_err(|e| notes.push(format!("wilcoxon: {e}")))
            .ok();
        SchemeComparison {
            session,
            n,
            mean_difference,
            dz,
            wilcoxon,
            note: (!notes.is_empty()).then(|| notes.join("; ")),
        }
    }
}
