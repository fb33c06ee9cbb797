//! Dataset resolution and output-directory helpers shared by the commands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use semgkit::datasets::{by_participant, dataset_checksum, load_canonical, synthesize, SessionDataset};

use crate::config::RunConfig;
use crate::exit::Usage;

/// Sessions plus the checksum that identifies them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub sessions: Vec<SessionDataset>,
    pub checksum: String,
    /// `canonical:<path>` or `synth`.
    pub source: String,
}

impl Dataset {
    /// Participants in order, restricted to `only` when non-empty.
    pub fn participants(&self, only: &[u32]) -> anyhow::Result<Vec<(u32, Vec<SessionDataset>)>> {
        let all = by_participant(&self.sessions);
        if only.is_empty() {
            return Ok(all);
        }
        for p in only {
            if !all.iter().any(|(q, _)| q == p) {
                return Err(Usage(format!("participants: participant {p} is not in the dataset")).into());
            }
        }
        Ok(all.into_iter().filter(|(p, _)| only.contains(p)).collect())
    }
}

/// Loads the configured dataset: a canonical directory takes precedence over
/// the generator.
pub fn load_dataset(cfg: &RunConfig) -> anyhow::Result<Dataset> {
    match (&cfg.dataset.path, &cfg.dataset.synth) {
        (Some(path), _) => {
            let loaded = load_canonical(path)?;
            Ok(Dataset {
                sessions: loaded.sessions,
                checksum: loaded.checksum,
                source: format!("canonical:{}", path.display()),
            })
        }
        (None, Some(spec)) => {
            let sessions = synthesize(spec)?;
            let checksum = dataset_checksum(&sessions)?;
            Ok(Dataset {
                sessions,
                checksum,
                source: "synth".into(),
            })
        }
        (None, None) => Err(Usage("dataset: set `dataset.path` or a `[dataset.synth]` table".into()).into()),
    }
}

/// Creates `dir`, refusing to reuse a non-empty directory unless `force`.
/// With `force`, files are overwritten in place; nothing is deleted.
pub fn prepare_output(dir: &Path, force: bool) -> anyhow::Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(Usage(format!("output {} exists and is not a directory", dir.display())).into());
        }
        let non_empty = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(Usage(format!(
                "output directory {} is not empty (pass --force to overwrite)",
                dir.display()
            ))
            .into());
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Writes rows as CSV with a header.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    write_file(path, &w.into_inner().context("flushing csv")?)
}

pub fn output_dir(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    cfg.output
        .clone()
        .ok_or_else(|| Usage("output: no output directory (set `output` or pass --output)".into()).into())
}
