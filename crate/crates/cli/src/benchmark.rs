//! The scheme × seed × participant grid and its report files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use semgkit::datasets::{Preprocessor, WindowMeta, WindowOrigin};
use semgkit::evaluation::{
    bin_by_intensity, bin_by_orientation, bin_by_yaw, mav_msa_day_report, trimmed_indices, AccuracyRow, AccuracyTable,
    BinnedAnalysis, DayComparison, TestSet,
};
use semgkit::kernel::Real;
use semgkit::training::{run_schemes, CalibrationScheme, NoObserver, SessionPlan};
use serde::Serialize;

use crate::config::{Precision, RunConfig};
use crate::data::{load_dataset, prepare_output, write_csv, write_file, Dataset};
use crate::report;

/// One evaluation window's outcome, kept for binned analyses.
#[derive(Debug, Clone, Copy)]
struct WindowOutcome {
    correct: bool,
    meta: WindowMeta,
}

#[derive(Debug, Default)]
struct JobOutput {
    rows: Vec<AccuracyRow>,
    /// Evaluation windows per scheme.
    windows: BTreeMap<String, Vec<WindowOutcome>>,
    /// (scheme, participant, seed, session, epochs, best epoch, best val loss, stopped early)
    histories: Vec<Vec<String>>,
    checkpoints: Vec<(PathBuf, Vec<u8>)>,
}

/// Result of a full benchmark run before anything is written.
#[derive(Debug)]
pub struct BenchmarkRun {
    pub table: AccuracyTable,
    pub dataset_checksum: String,
    pub dataset_source: String,
    /// Warnings about schemes that could not run.
    pub skipped: Vec<String>,
    windows: BTreeMap<String, Vec<WindowOutcome>>,
    histories: Vec<Vec<String>>,
    checkpoints: Vec<(PathBuf, Vec<u8>)>,
    dataset: Dataset,
}

/// Worker count from `SEMGKIT_WORKERS`, defaulting to the available cores.
pub fn workers() -> usize {
    std::env::var("SEMGKIT_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub fn checkpoint_path(scheme: CalibrationScheme, participant: u32, seed: u64, session: u32) -> PathBuf {
    PathBuf::from("checkpoints")
        .join(scheme.name())
        .join(format!("p{participant:02}_seed{seed}_s{session:02}.ckpt"))
}

fn run_job<T: Real>(
    cfg: &RunConfig,
    plan: &SessionPlan,
    schemes: &[CalibrationScheme],
    seed: u64,
    checksum: &str,
) -> anyhow::Result<JobOutput> {
    let spec = cfg.experiment(seed);
    let outcomes = run_schemes::<T>(plan, schemes, &spec, &mut NoObserver)
        .with_context(|| format!("participant {} seed {seed}", plan.participant))?;
    let mut out = JobOutput::default();
    let p = plan.participant;
    for o in outcomes {
        let name = o.scheme.name().to_string();
        for (so, ps) in o.sessions.iter().zip(&plan.sessions) {
            if so.skipped.is_some() {
                continue;
            }
            for (set, score) in [(TestSet::Offline, so.offline), (TestSet::Evaluation, so.evaluation)] {
                if let Some(s) = score {
                    out.rows.push(AccuracyRow {
                        scheme: name.clone(),
                        session: so.session,
                        participant: p,
                        seed,
                        test_set: set,
                        correct: s.correct,
                        total: s.total,
                    });
                }
            }
            let windows = out.windows.entry(name.clone()).or_default();
            for (meta, &pred) in ps.evaluation.meta.iter().zip(&so.evaluation_predictions) {
                windows.push(WindowOutcome {
                    correct: pred == meta.label,
                    meta: *meta,
                });
            }
            if let Some(h) = &so.history {
                out.histories.push(vec![
                    name.clone(),
                    p.to_string(),
                    seed.to_string(),
                    so.session.to_string(),
                    h.epochs.len().to_string(),
                    h.best_epoch.to_string(),
                    h.best_val_loss.to_string(),
                    h.stopped_early.to_string(),
                ]);
            }
        }
        for (&session, model) in &o.models {
            let mut ck = model.to_checkpoint();
            ck.set_meta("run.scheme", &name);
            ck.set_meta("run.participant", p);
            ck.set_meta("run.seed", seed);
            ck.set_meta("run.session", session);
            ck.set_meta("run.precision", format!("{:?}", T::DTYPE).to_lowercase());
            ck.set_meta("dataset.checksum", checksum);
            ck.set_meta("config.hash", cfg.model_hash());
            out.checkpoints
                .push((checkpoint_path(o.scheme, p, seed, session), ck.to_bytes()));
        }
    }
    Ok(out)
}

/// Runs every applicable scheme for every participant and seed. Jobs run on
/// up to [`workers`] threads; results are assembled in a fixed order.
pub fn run_benchmark(cfg: &RunConfig) -> anyhow::Result<BenchmarkRun> {
    cfg.validate()?;
    let schemes = cfg.schemes()?;
    let dataset = load_dataset(cfg)?;
    let pre = Preprocessor::new(cfg.preprocess_spec())?;
    let mut skipped = Vec::new();
    let mut plans = Vec::new();
    for (p, sessions) in dataset.participants(&cfg.participants)? {
        let sets = pre.participant(&sessions)?;
        let plan = SessionPlan::new(p, &sets, &cfg.preprocess.train_cycles, cfg.preprocess.test_cycle)?;
        let mut applicable = Vec::new();
        for &s in &schemes {
            match s.check_applicable(plan.sessions.len()) {
                Ok(()) => applicable.push(s),
                Err(e) => skipped.push(format!("{} skipped for participant {p}: {e}", s.name())),
            }
        }
        if !applicable.is_empty() {
            plans.push((plan, applicable));
        }
    }
    for w in &skipped {
        eprintln!("warning: {w}");
    }

    let jobs: Vec<(usize, u64)> = (0..plans.len())
        .flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers()).build()?;
    let outputs: Vec<anyhow::Result<JobOutput>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| {
                let (plan, applicable) = &plans[i];
                match cfg.precision {
                    Precision::F32 => run_job::<f32>(cfg, plan, applicable, seed, &dataset.checksum),
                    Precision::F64 => run_job::<f64>(cfg, plan, applicable, seed, &dataset.checksum),
                }
            })
            .collect()
    });

    let mut table = AccuracyTable::new();
    let mut windows: BTreeMap<String, Vec<WindowOutcome>> = BTreeMap::new();
    let mut histories = Vec::new();
    let mut checkpoints = Vec::new();
    for out in outputs {
        let out = out?;
        for r in out.rows {
            table.push(r)?;
        }
        for (k, v) in out.windows {
            windows.entry(k).or_default().extend(v);
        }
        histories.extend(out.histories);
        checkpoints.extend(out.checkpoints);
    }
    checkpoints.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(BenchmarkRun {
        table,
        dataset_checksum: dataset.checksum.clone(),
        dataset_source: dataset.source.clone(),
        skipped,
        windows,
        histories,
        checkpoints,
        dataset,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    dataset: ManifestDataset<'a>,
    skipped: &'a [String],
    files: BTreeMap<String, String>,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct ManifestDataset<'a> {
    source: &'a str,
    checksum: &'a str,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

fn binned_rows(b: &BinnedAnalysis) -> Vec<Vec<String>> {
    b.bins
        .iter()
        .map(|bin| {
            let mut row: Vec<String> = bin.lower.iter().map(|l| (l + bin.width / 2.0).to_string()).collect();
            row.push(bin.accuracy().to_string());
            row
        })
        .collect()
}

fn write_figures(dir: &Path, cfg: &RunConfig, run: &BenchmarkRun) -> anyhow::Result<()> {
    let fig = dir.join("figures");
    for scheme in run.table.schemes() {
        for set in report::TEST_SETS {
            let rows: Vec<Vec<String>> = run
                .table
                .sessions()
                .into_iter()
                .filter_map(|s| {
                    run.table
                        .mean_accuracy(&scheme, s, set)
                        .map(|m| vec![s.to_string(), m.to_string()])
                })
                .collect();
            write_csv(
                &fig.join(format!("accuracy_over_time_{scheme}_{set}.csv")),
                &["session", "mean_accuracy"],
                &rows,
            )?;
        }
    }

    let a = &cfg.analysis;
    for (scheme, all) in &run.windows {
        let metas: Vec<WindowMeta> = all.iter().map(|w| w.meta).collect();
        let kept: Vec<&WindowOutcome> = trimmed_indices(&metas, a.trim_transitions_s)
            .into_iter()
            .map(|i| &all[i])
            .collect();
        let correct: Vec<bool> = kept.iter().map(|w| w.correct).collect();

        let with_ratio: Vec<(&WindowOutcome, f64)> = kept
            .iter()
            .filter_map(|w| w.meta.intensity_ratio.map(|r| (*w, r)))
            .collect();
        let ratio_correct: Vec<bool> = with_ratio.iter().map(|(w, _)| w.correct).collect();
        let ratios: Vec<f64> = with_ratio.iter().map(|(_, r)| *r).collect();
        let b = bin_by_intensity(&ratio_correct, &ratios, a.intensity_bin)?;
        write_csv(
            &fig.join(format!("intensity_{scheme}.csv")),
            &["intensity_ratio", "accuracy"],
            &binned_rows(&b),
        )?;

        let pitch: Vec<f64> = kept.iter().map(|w| w.meta.pitch).collect();
        let yaw: Vec<f64> = kept.iter().map(|w| w.meta.yaw).collect();
        let g = a.orientation_grid_deg;
        let b = bin_by_yaw(&correct, &yaw, g, a.min_count)?;
        write_csv(
            &fig.join(format!("yaw_{scheme}.csv")),
            &["yaw_deg", "accuracy"],
            &binned_rows(&b),
        )?;
        let b = bin_by_orientation(&correct, &pitch, &yaw, g, a.min_count)?;
        write_csv(
            &fig.join(format!("orientation_{scheme}.csv")),
            &["pitch_deg", "yaw_deg", "accuracy"],
            &binned_rows(&b),
        )?;

        // Run-level score against run-level accuracy, when scores exist.
        let mut runs: BTreeMap<(u32, u32, u32), (usize, usize)> = BTreeMap::new();
        for w in all {
            if let WindowOrigin::Evaluation { run, .. } = w.meta.origin {
                let e = runs.entry((w.meta.participant, w.meta.session, run)).or_default();
                e.0 += w.correct as usize;
                e.1 += 1;
            }
        }
        let mut pairs = Vec::new();
        for (&(p, s, r), &(c, t)) in &runs {
            let score = run
                .dataset
                .sessions
                .iter()
                .find(|d| d.participant == p && d.session == s)
                .and_then(|d| d.evaluation_runs.iter().find(|e| e.id == r))
                .and_then(|e| e.score);
            if let Some(score) = score {
                pairs.push((score, c as f64 / t as f64));
            }
        }
        if !pairs.is_empty() {
            let rows: Vec<Vec<String>> = pairs
                .iter()
                .map(|(s, acc)| vec![s.to_string(), acc.to_string()])
                .collect();
            write_csv(
                &fig.join(format!("score_accuracy_{scheme}.csv")),
                &["score", "accuracy"],
                &rows,
            )?;
        }
    }
    Ok(())
}

type DayValue = fn(&semgkit::evaluation::DayStats) -> Option<f64>;

fn write_day_report(dir: &Path, cfg: &RunConfig, dataset: &Dataset) -> anyhow::Result<Option<String>> {
    let pre = Preprocessor::new(cfg.preprocess_spec())?;
    let report = match mav_msa_day_report(&dataset.sessions, &pre) {
        Ok(r) => r,
        Err(semgkit::Error::Insufficient(why)) => return Ok(Some(why)),
        Err(e) => return Err(e.into()),
    };
    let mut rows = Vec::new();
    for d in &report.days {
        let (tm, ts) = d.training_mav_summary();
        let (em, es) = d.evaluation_mav_summary();
        rows.push(vec![
            d.participant.to_string(),
            d.session.to_string(),
            d.day.to_string(),
            tm.to_string(),
            ts.to_string(),
            em.to_string(),
            es.to_string(),
            d.training_msa.map(|v| v.to_string()).unwrap_or_default(),
            d.evaluation_msa.map(|v| v.to_string()).unwrap_or_default(),
        ]);
    }
    write_csv(
        &dir.join("days.csv"),
        &[
            "participant",
            "session",
            "day",
            "training_mav",
            "training_mav_sd",
            "evaluation_mav",
            "evaluation_mav_sd",
            "training_msa",
            "evaluation_msa",
        ],
        &rows,
    )?;
    // Two-column day curves: mean over participants at each day.
    let fig = dir.join("figures");
    let curves: [(&str, DayValue); 4] = [
        ("mav_training", |d| {
            Some(d.training_mav_summary().0).filter(|v| v.is_finite())
        }),
        ("mav_evaluation", |d| {
            Some(d.evaluation_mav_summary().0).filter(|v| v.is_finite())
        }),
        ("msa_training", |d| d.training_msa),
        ("msa_evaluation", |d| d.evaluation_msa),
    ];
    for (name, get) in curves {
        let mut by_day: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
        for d in &report.days {
            if let Some(v) = get(d) {
                by_day.entry(d.day.to_bits()).or_insert((d.day, Vec::new())).1.push(v);
            }
        }
        let mut rows: Vec<(f64, f64)> = by_day
            .into_values()
            .map(|(day, v)| (day, v.iter().sum::<f64>() / v.len() as f64))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let rows: Vec<Vec<String>> = rows.iter().map(|(d, v)| vec![d.to_string(), v.to_string()]).collect();
        write_csv(&fig.join(format!("{name}.csv")), &["day", "value"], &rows)?;
    }
    let describe = |c: &DayComparison| match c {
        DayComparison::Tested(w) => vec![
            w.n.to_string(),
            w.statistic.to_string(),
            w.p_value.to_string(),
            String::new(),
        ],
        DayComparison::NoChange => vec![String::new(), String::new(), String::new(), "no change".into()],
        DayComparison::Insufficient(why) => vec![String::new(), String::new(), String::new(), why.clone()],
    };
    let mut rows = Vec::new();
    for (name, c) in [
        ("training_mav", &report.training_mav),
        ("evaluation_mav", &report.evaluation_mav),
    ] {
        let mut r = vec![name.to_string()];
        r.extend(describe(c));
        rows.push(r);
    }
    write_csv(
        &dir.join("day_tests.csv"),
        &["quantity", "pairs", "wilcoxon_statistic", "p_value", "note"],
        &rows,
    )?;
    Ok(None)
}

/// Runs the benchmark and writes every report file under the output
/// directory. Returns the run for callers that inspect results.
pub fn cmd_benchmark(cfg: &RunConfig, out: &Path, force: bool) -> anyhow::Result<BenchmarkRun> {
    prepare_output(out, force)?;
    let mut run = run_benchmark(cfg)?;
    report::write_accuracy(out, &run.table)?;
    report::write_tables(out, &run.table)?;
    write_figures(out, cfg, &run)?;
    if let Some(why) = write_day_report(out, cfg, &run.dataset)? {
        run.skipped.push(format!("day report skipped: {why}"));
    }
    run.histories.sort();
    write_csv(
        &out.join("training.csv"),
        &[
            "scheme",
            "participant",
            "seed",
            "session",
            "epochs",
            "best_epoch",
            "best_val_loss",
            "stopped_early",
        ],
        &run.histories,
    )?;
    for (rel, bytes) in &run.checkpoints {
        write_file(&out.join(rel), bytes)?;
    }

    let mut files = BTreeMap::new();
    collect_hashes(out, out, &mut files)?;
    let manifest = Manifest {
        tool: "semgkit",
        version: env!("CARGO_PKG_VERSION"),
        command: "benchmark",
        dataset: ManifestDataset {
            source: &run.dataset_source,
            checksum: &run.dataset_checksum,
        },
        skipped: &run.skipped,
        files,
        config: cfg,
    };
    write_file(&out.join(MANIFEST_FILE), toml::to_string(&manifest)?.as_bytes())?;
    Ok(run)
}

/// SHA-256 of every file under `dir` except the manifest, keyed by
/// forward-slash relative path.
fn collect_hashes(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> anyhow::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            collect_hashes(root, &path, out)?;
        } else if path != root.join(MANIFEST_FILE) {
            let rel = path.strip_prefix(root)?.to_string_lossy().replace('\\', "/");
            out.insert(rel, crate::sha256_hex(&std::fs::read(&path)?));
        }
    }
    Ok(())
}
