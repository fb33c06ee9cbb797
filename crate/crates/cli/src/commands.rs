//! Subcommands other than the benchmark.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use semgkit::datasets::{write_canonical, Preprocessor, WindowOrigin};
use semgkit::evaluation::{bin_by_intensity, bin_by_orientation, trimmed_indices, BinnedAnalysis};
use semgkit::kernel::Checkpoint;
use semgkit::training::{SessionPlan, TrainedModel};

use crate::benchmark::{cmd_benchmark, BenchmarkRun};
use crate::config::RunConfig;
use crate::data::{load_dataset, prepare_output, write_csv, write_file};
use crate::exit::Usage;
use crate::import::import_csv_tree;
use crate::report;

/// Generates the configured synthetic dataset (defaults when the config has
/// no `[dataset.synth]` table) in canonical form. Returns the checksum.
pub fn cmd_synth(cfg: &RunConfig, out: &Path, seed: Option<u64>, force: bool) -> anyhow::Result<String> {
    let mut spec = cfg.dataset.synth.clone().unwrap_or_default();
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate().map_err(|e| Usage(e.to_string()))?;
    let sessions = semgkit::datasets::synthesize(&spec)?;
    prepare_output(out, force)?;
    Ok(write_canonical(out, &sessions)?)
}

/// Converts a CSV export tree into canonical form. Returns the checksum.
pub fn cmd_import(source: &Path, out: &Path, force: bool) -> anyhow::Result<String> {
    let sessions = import_csv_tree(source)?;
    prepare_output(out, force)?;
    Ok(write_canonical(out, &sessions)?)
}

/// Writes one metadata row per analysis window. Returns the window count.
pub fn cmd_preprocess(cfg: &RunConfig, out: &Path, force: bool) -> anyhow::Result<usize> {
    let dataset = load_dataset(cfg)?;
    let pre = Preprocessor::new(cfg.preprocess_spec())?;
    let mut rows = Vec::new();
    for (_, sessions) in dataset.participants(&cfg.participants)? {
        for set in pre.participant(&sessions)? {
            for m in &set.meta {
                let (origin, id, trial) = match m.origin {
                    WindowOrigin::Cycle(c) => ("cycle", c, String::new()),
                    WindowOrigin::Evaluation { run, trial } => ("evaluation", run, trial.to_string()),
                };
                rows.push(vec![
                    m.participant.to_string(),
                    m.session.to_string(),
                    origin.to_string(),
                    id.to_string(),
                    trial,
                    m.label.to_string(),
                    m.start.to_string(),
                    m.since_cue.to_string(),
                    m.mav.to_string(),
                    m.intensity_ratio.map(|v| v.to_string()).unwrap_or_default(),
                    m.level.map(|v| v.to_string()).unwrap_or_default(),
                    m.pitch.to_string(),
                    m.yaw.to_string(),
                ]);
            }
        }
    }
    prepare_output(out, force)?;
    write_csv(
        &out.join("windows.csv"),
        &[
            "participant",
            "session",
            "origin",
            "recording",
            "trial",
            "label",
            "start",
            "since_cue_s",
            "mav",
            "intensity_ratio",
            "level",
            "pitch_deg",
            "yaw_deg",
        ],
        &rows,
    )?;
    write_file(
        &out.join("dataset.toml"),
        format!("source = {:?}\nchecksum = {:?}\n", dataset.source, dataset.checksum).as_bytes(),
    )?;
    Ok(rows.len())
}

/// Trains one scheme for one participant and seed; same files as the
/// benchmark, restricted to that run.
pub fn cmd_train(cfg: &RunConfig, out: &Path, force: bool) -> anyhow::Result<BenchmarkRun> {
    cfg.validate()?;
    if cfg.schemes()?.len() != 1 || cfg.seeds.len() != 1 {
        return Err(Usage("train runs exactly one scheme and one seed (use benchmark for grids)".into()).into());
    }
    cmd_benchmark(cfg, out, force)
}

/// Accuracy of one checkpoint on its own participant and session.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub scheme: String,
    pub participant: u32,
    pub session: u32,
    pub offline: (usize, usize),
    pub evaluation: (usize, usize),
    /// Evaluation windows before and after transition trimming.
    pub windows: usize,
    pub kept: usize,
    pub intensity: BinnedAnalysis,
    pub orientation: BinnedAnalysis,
}

impl Evaluation {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let pct = |(c, t): (usize, usize)| if t == 0 { f64::NAN } else { 100.0 * c as f64 / t as f64 };
        let _ = writeln!(
            s,
            "scheme {} participant {} session {}",
            self.scheme, self.participant, self.session
        );
        let _ = writeln!(
            s,
            "offline accuracy {:.2}% ({}/{})",
            pct(self.offline),
            self.offline.0,
            self.offline.1
        );
        let _ = writeln!(
            s,
            "evaluation accuracy {:.2}% ({}/{})",
            pct(self.evaluation),
            self.evaluation.0,
            self.evaluation.1
        );
        let _ = writeln!(
            s,
            "evaluation windows after trimming: {} of {}",
            self.kept, self.windows
        );
        let _ = writeln!(s, "intensity bins (ratio lower edge, accuracy %, count)");
        for b in &self.intensity.bins {
            let _ = writeln!(s, "  {:.2} {:.2} {}", b.lower[0], 100.0 * b.accuracy(), b.total);
        }
        let _ = writeln!(
            s,
            "orientation bins >= {} windows (pitch, yaw, accuracy %, count); {} windows in suppressed bins",
            self.orientation.min_count, self.orientation.suppressed
        );
        for b in &self.orientation.bins {
            let _ = writeln!(
                s,
                "  {} {} {:.2} {}",
                b.lower[0],
                b.lower[1],
                100.0 * b.accuracy(),
                b.total
            );
        }
        s
    }
}

/// Replays a checkpoint written by `train` or `benchmark`. The dataset and
/// model settings must match the ones it was trained with.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path, trim_s: Option<f64>) -> anyhow::Result<Evaluation> {
    let ck = Checkpoint::load(checkpoint)?;
    let dataset = load_dataset(cfg)?;
    let recorded = ck.meta("dataset.checksum")?;
    if recorded != dataset.checksum {
        return Err(semgkit::Error::Checkpoint(format!(
            "dataset checksum {} differs from the checkpoint's {recorded}",
            dataset.checksum
        ))
        .into());
    }
    if ck.meta("config.hash")? != cfg.model_hash() {
        return Err(semgkit::Error::Checkpoint(
            "model or preprocessing settings differ from the ones the checkpoint was trained with".into(),
        )
        .into());
    }
    let participant: u32 = ck.meta_parse("run.participant")?;
    let session: u32 = ck.meta_parse("run.session")?;
    let scheme = ck.meta("run.scheme")?.to_string();

    let sessions = dataset
        .participants(&[participant])
        .context("checkpoint participant")?
        .remove(0)
        .1;
    let pre = Preprocessor::new(cfg.preprocess_spec())?;
    let sets = pre.participant(&sessions)?;
    let plan = SessionPlan::new(
        participant,
        &sets,
        &cfg.preprocess.train_cycles,
        cfg.preprocess.test_cycle,
    )?;
    let ps = plan
        .sessions
        .iter()
        .find(|s| s.session == session)
        .ok_or_else(|| semgkit::Error::Checkpoint(format!("session {session} is not in the dataset")))?;

    let score = |pred: &[usize], labels: &[usize]| {
        let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        (correct, labels.len())
    };
    let (offline, evaluation, pred) = match ck.meta("run.precision")? {
        "f64" => {
            let m = TrainedModel::<f64>::from_checkpoint(&ck)?;
            let pred = m.predict(&ps.evaluation)?;
            (
                score(&m.predict(&ps.offline_test)?, &ps.offline_test.labels()),
                score(&pred, &ps.evaluation.labels()),
                pred,
            )
        }
        _ => {
            let m = TrainedModel::<f32>::from_checkpoint(&ck)?;
            let pred = m.predict(&ps.evaluation)?;
            (
                score(&m.predict(&ps.offline_test)?, &ps.offline_test.labels()),
                score(&pred, &ps.evaluation.labels()),
                pred,
            )
        }
    };

    let a = &cfg.analysis;
    let meta = &ps.evaluation.meta;
    let kept = trimmed_indices(meta, trim_s.unwrap_or(a.trim_transitions_s));
    let correct: Vec<bool> = kept.iter().map(|&i| pred[i] == meta[i].label).collect();
    let ratio_idx: Vec<usize> = (0..kept.len())
        .filter(|&j| meta[kept[j]].intensity_ratio.is_some())
        .collect();
    let intensity = bin_by_intensity(
        &ratio_idx.iter().map(|&j| correct[j]).collect::<Vec<_>>(),
        &ratio_idx
            .iter()
            .map(|&j| meta[kept[j]].intensity_ratio.unwrap_or_default())
            .collect::<Vec<_>>(),
        a.intensity_bin,
    )?;
    let orientation = bin_by_orientation(
        &correct,
        &kept.iter().map(|&i| meta[i].pitch).collect::<Vec<_>>(),
        &kept.iter().map(|&i| meta[i].yaw).collect::<Vec<_>>(),
        a.orientation_grid_deg,
        a.min_count,
    )?;
    Ok(Evaluation {
        scheme,
        participant,
        session,
        offline,
        evaluation,
        windows: meta.len(),
        kept: kept.len(),
        intensity,
        orientation,
    })
}

/// Rebuilds summary tables from a run's accuracy.csv. Writes them to `out`
/// when given; always returns the text report.
pub fn cmd_report(input: &Path, out: Option<&Path>, force: bool) -> anyhow::Result<String> {
    let table = report::read_accuracy(&input.join(report::ACCURACY_FILE))?;
    if let Some(out) = out {
        prepare_output(out, force)?;
        report::write_accuracy(out, &table)?;
        report::write_tables(out, &table)?;
    }
    Ok(report::render_text(&table))
}
