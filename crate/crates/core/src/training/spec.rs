use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Optimization and early-stopping settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub lr: f64,
    pub batch_size: usize,
    pub validation_fraction: f64,
    /// Stop after this many epochs without validation improvement.
    pub early_stop_patience: usize,
    /// Divide the learning rate by this factor ...
    pub anneal_factor: f64,
    /// ... after this many epochs without improvement.
    pub anneal_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            lr: 0.002233,
            batch_size: 512,
            validation_fraction: 0.10,
            early_stop_patience: 10,
            anneal_factor: 5.0,
            anneal_patience: 5,
            max_epochs: 500,
            seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config("validation_fraction", "must lie in (0, 1)"));
        }
        if self.early_stop_patience == 0 || self.anneal_patience == 0 {
            return Err(Error::config("patience", "must be at least 1"));
        }
        if !(self.anneal_factor >= 1.0) {
            return Err(Error::config("anneal_factor", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be at least 1"));
        }
        Ok(())
    }
}

/// Starting weights of the TADANN target network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetInit {
    /// A copy of the pre-trained source network.
    #[default]
    Source,
    /// Independent random initialization.
    Random,
}

/// Adversarial pre-training and fusion settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdannSpec {
    /// Gradient reversal strength.
    pub lambda: f64,
    /// Weight of the domain loss relative to the classification loss.
    pub domain_loss_weight: f64,
    pub target_init: TargetInit,
}

impl Default for AdannSpec {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            domain_loss_weight: 1.0,
            target_init: TargetInit::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub improved: bool,
    /// The learning rate was divided after this epoch.
    pub annealed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl History {
    /// Checks the patience rule on the recorded trace: anneals happen only
    /// after `anneal_patience` non-improving epochs and never at an epoch
    /// whose validation loss beat the running best.
    pub fn audit(&self, spec: &TrainSpec) -> std::result::Result<(), String> {
        let mut best = f64::INFINITY;
        let mut since_best = 0;
        let mut since_anneal = 0;
        for r in &self.epochs {
            let improved = r.val_loss < best;
            if improved != r.improved {
                return Err(format!("epoch {}: improvement flag disagrees with losses", r.epoch));
            }
            if improved {
                best = r.val_loss;
                since_best = 0;
                since_anneal = 0;
            } else {
                since_best += 1;
                since_anneal += 1;
            }
            if r.annealed {
                if improved || r.val_loss < best || since_anneal < spec.anneal_patience {
                    return Err(format!(
                        "epoch {}: anneal without {} stale epochs",
                        r.epoch, spec.anneal_patience
                    ));
                }
                since_anneal = 0;
            }
        }
        if self.stopped_early && since_best < spec.early_stop_patience {
            return Err("early stop before the patience ran out".into());
        }
        Ok(())
    }
}

/// Patience bookkeeping for annealing and early stopping.
#[derive(Debug, Clone)]
pub(crate) struct Patience {
    spec: TrainSpec,
    pub best: f64,
    pub best_epoch: usize,
    since_best: usize,
    since_anneal: usize,
    pub lr: f64,
}

pub(crate) struct Verdict {
    pub improved: bool,
    pub annealed: bool,
    pub stop: bool,
}

impl Patience {
    pub fn new(spec: &TrainSpec) -> Self {
        Self {
            spec: *spec,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
            since_anneal: 0,
            lr: spec.lr,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Verdict {
        let improved = val_loss < self.best;
        if improved {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            self.since_anneal = 0;
        } else {
            self.since_best += 1;
            self.since_anneal += 1;
        }
        let stop = self.since_best >= self.spec.early_stop_patience;
        let annealed = !stop && self.since_anneal >= self.spec.anneal_patience;
        if annealed {
            self.lr /= self.spec.anneal_factor;
            self.since_anneal = 0;
        }
        Verdict {
            improved,
            annealed,
            stop,
        }
    }
}
