//! The TCN gesture classifier, its adversarial domain head and the
//! two-network TADANN fusion.

mod config;
mod tadann;
mod tcn;

use rand_chacha::ChaCha8Rng;

pub use config::{uniform_parameter_formula, TcnConfig};
pub use tadann::{build_tadann, TadannModel, TadannTrace, COEFFICIENTS_NAME};
pub use tcn::{FeatureTrace, Features, TcnModel, TemporalBlock};

use crate::kernel::{DomainKey, Parameter, Real, Tensor};
use crate::Result;

/// What the training loops need from a classifier.
pub trait Network<T: Real>: Clone {
    fn num_classes(&self) -> usize;

    /// Makes sure batch-norm banks for `key` exist.
    fn prepare_domain(&mut self, key: DomainKey);

    /// Training-mode forward plus backward of the mean cross-entropy;
    /// gradients are accumulated into the parameters. Returns the loss.
    fn accumulate_gradients(
        &mut self,
        x: &Tensor<T>,
        labels: &[usize],
        key: DomainKey,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64>;

    /// Inference-mode logits.
    fn logits(&self, x: &Tensor<T>, key: DomainKey) -> Result<Tensor<T>>;

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>>;

    fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Parameter::zero_grad);
    }

    /// Hook run after every optimizer step.
    fn after_step(&mut self) {}

    /// Layer-fusion coefficients, empty for plain networks.
    fn fusion_coefficients(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise argmax of a `[B, classes]` logit tensor.
pub fn predict_logits<T: Real>(logits: &Tensor<T>) -> Vec<usize> {
    let classes = logits.dim(1);
    logits.data().chunks(classes).map(argmax).collect()
}

/// Inference-mode predictions, processed in chunks of `chunk` windows.
pub fn predict<T: Real, N: Network<T>>(
    model: &N,
    windows: &Tensor<T>,
    key: DomainKey,
    chunk: usize,
) -> Result<Vec<usize>> {
    let b = windows.dim(0);
    let per = windows.len() / b.max(1);
    let mut out = Vec::with_capacity(b);
    let chunk = chunk.max(1);
    let mut start = 0;
    while start < b {
        let end = (start + chunk).min(b);
        let mut shape = windows.shape().to_vec();
        shape[0] = end - start;
        let part = Tensor::from_vec(&shape, windows.data()[start * per..end * per].to_vec())?;
        out.extend(predict_logits(&model.logits(&part, key)?));
        start = end;
    }
    Ok(out)
}
