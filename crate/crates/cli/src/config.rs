//! The run configuration: one TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use semgkit::datasets::{PreprocessSpec, SynthSpec};
use semgkit::kernel::BnConfig;
use semgkit::model::TcnConfig;
use semgkit::signal::{FilterSpec, WindowSpec};
use semgkit::training::{
    AdannSpec, CalibrationScheme, ExperimentSpec, TrainSpec, DEFAULT_TEST_CYCLE, DEFAULT_TRAIN_CYCLES,
};
use serde::{Deserialize, Serialize};

use crate::exit::Usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Where the recordings come from: a canonical directory or the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    pub synth: Option<SynthSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Output width of each temporal block.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = TcnConfig::default();
        Self {
            channels: c.channels,
            kernel_size: c.kernel_size,
            dropout: c.dropout,
            leaky_slope: c.leaky_slope,
            bn_momentum: c.bn.momentum,
            bn_eps: c.bn.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    pub filter_order: usize,
    pub window_ms: f64,
    pub overlap_ms: f64,
    pub train_cycles: Vec<u32>,
    pub test_cycle: u32,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let (f, w) = (FilterSpec::default(), WindowSpec::default());
        Self {
            low_cut_hz: f.low_cut,
            high_cut_hz: f.high_cut,
            filter_order: f.order,
            window_ms: w.window_ms,
            overlap_ms: w.overlap_ms,
            train_cycles: DEFAULT_TRAIN_CYCLES.to_vec(),
            test_cycle: DEFAULT_TEST_CYCLE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Seconds after each cue excluded from binned analyses.
    pub trim_transitions_s: f64,
    pub intensity_bin: f64,
    pub orientation_grid_deg: f64,
    pub min_count: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        use semgkit::evaluation::*;
        Self {
            trim_transitions_s: DEFAULT_TRIM_S,
            intensity_bin: DEFAULT_INTENSITY_BIN,
            orientation_grid_deg: DEFAULT_ORIENTATION_GRID,
            min_count: DEFAULT_MIN_COUNT,
        }
    }
}

/// Everything a command needs; serialized verbatim into run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub schemes: Vec<String>,
    /// Restrict to these participants; empty means all.
    pub participants: Vec<u32>,
    pub precision: Precision,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainSpec,
    pub adann: AdannSpec,
    pub preprocess: PreprocessSection,
    pub analysis: AnalysisSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output: None,
            seeds: vec![0],
            schemes: CalibrationScheme::ALL.iter().map(|s| s.name().to_string()).collect(),
            participants: Vec::new(),
            precision: Precision::default(),
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            train: TrainSpec::default(),
            adann: AdannSpec::default(),
            preprocess: PreprocessSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path`, or returns defaults when no file is given.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            std::fs::read_to_string(path).map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| Usage(format!("config: {e}")).into())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schemes(&self) -> anyhow::Result<Vec<CalibrationScheme>> {
        if self.schemes.is_empty() {
            bail!(Usage("schemes: at least one scheme is required".into()));
        }
        let mut out = Vec::new();
        for s in &self.schemes {
            let scheme: CalibrationScheme = s.parse().map_err(|e| Usage(format!("schemes: {e}")))?;
            if !out.contains(&scheme) {
                out.push(scheme);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn model_config(&self) -> TcnConfig {
        let p = &self.preprocess;
        TcnConfig {
            window_len: (p.window_ms * semgkit::SAMPLE_RATE_HZ / 1000.0).round() as usize,
            channels: self.model.channels.clone(),
            kernel_size: self.model.kernel_size,
            dropout: self.model.dropout,
            leaky_slope: self.model.leaky_slope,
            bn: BnConfig {
                momentum: self.model.bn_momentum,
                eps: self.model.bn_eps,
            },
            ..TcnConfig::default()
        }
    }

    pub fn preprocess_spec(&self) -> PreprocessSpec {
        let p = &self.preprocess;
        PreprocessSpec {
            filter: FilterSpec {
                low_cut: p.low_cut_hz,
                high_cut: p.high_cut_hz,
                order: p.filter_order,
                ..FilterSpec::default()
            },
            window: WindowSpec {
                window_ms: p.window_ms,
                overlap_ms: p.overlap_ms,
            },
        }
    }

    pub fn experiment(&self, seed: u64) -> ExperimentSpec {
        ExperimentSpec {
            model: self.model_config(),
            train: TrainSpec { seed, ..self.train },
            adann: self.adann,
        }
    }

    /// Checks everything that can be checked without data.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.seeds.is_empty() {
            bail!(Usage("seeds: at least one seed is required".into()));
        }
        self.schemes()?;
        let usage = |e: semgkit::Error| Usage(e.to_string());
        self.model_config().validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        self.preprocess_spec().filter.validate().map_err(usage)?;
        self.preprocess_spec().window.validate().map_err(usage)?;
        if let Some(s) = &self.dataset.synth {
            s.validate().map_err(usage)?;
        }
        Ok(())
    }

    /// Hash of the settings a checkpoint depends on (model and preprocessing).
    pub fn model_hash(&self) -> String {
        #[derive(Serialize)]
        struct Keyed<'a> {
            model: &'a ModelSection,
            preprocess: &'a PreprocessSection,
        }
        let text = toml::to_string(&Keyed {
            model: &self.model,
            preprocess: &self.preprocess,
        })
        .expect("config serializes");
        crate::sha256_hex(text.as_bytes())
    }
}
