use rand_chacha::ChaCha8Rng;

use super::config::TcnConfig;
use super::tcn::{FeatureTrace, TcnModel};
use super::Network;
use crate::kernel::{
    clamp_coefficient, softmax_cross_entropy, Checkpoint, CheckpointEntry, DomainKey, Parameter, Real, Tensor,
};
use crate::{Error, Result};

pub const COEFFICIENTS_NAME: &str = "fusion.coefficients";

/// A frozen pre-trained source network fused into a trainable target network.
///
/// The source's block outputs, each scaled by its own coefficient, are added
/// to the target's block outputs; a last coefficient scales the source's
/// pooled features into the target's pooled features. The target keeps its
/// own output head.
#[derive(Debug, Clone, PartialEq)]
pub struct TadannModel<T> {
    pub source: TcnModel<T>,
    pub target: TcnModel<T>,
    /// One scalar per block plus one for the pooled features.
    pub coefficients: Parameter<T>,
    pub calibration: DomainKey,
}

/// Activations of one training-mode TADANN pass.
#[derive(Debug, Clone)]
pub struct TadannTrace<T> {
    pub source: FeatureTrace<T>,
    pub target: FeatureTrace<T>,
    pub pooled: Tensor<T>,
}

/// Freezes `source` except its BN affine parameters, adds a fresh bank for
/// `calibration`, and pairs it with a newly initialized target network.
pub fn build_tadann<T: Real>(
    mut source: TcnModel<T>,
    target_config: &TcnConfig,
    calibration: DomainKey,
    seed: u64,
) -> Result<TadannModel<T>> {
    if !source.config().same_architecture(target_config) {
        return Err(Error::config(
            "target_config",
            "target architecture differs from the source network",
        ));
    }
    source.freeze_except_batch_norm();
    source.ensure_domain(calibration);
    source.set_prefix("source.");
    let mut target = TcnModel::new(target_config.clone(), seed)?;
    target.set_prefix("target.");
    let n = target_config.num_blocks() + 1;
    Ok(TadannModel {
        source,
        target,
        coefficients: Parameter::new(COEFFICIENTS_NAME, Tensor::full(&[n], T::one())),
        calibration,
    })
}

impl<T: Real> TadannModel<T> {
    /// Overwrites the target's weights with the source's. Running statistics
    /// are left alone; the target meets the calibration session with a fresh
    /// bank either way.
    pub fn copy_source_into_target(&mut self) {
        let values: Vec<Tensor<T>> = self.source.parameters().iter().map(|p| p.value.clone()).collect();
        for (t, v) in self.target.parameters_mut().into_iter().zip(values) {
            t.value = v;
        }
    }

    fn fusion_terms(&self, source_outputs: &[&Tensor<T>]) -> Vec<Tensor<T>> {
        let c = self.coefficients.value.data();
        source_outputs
            .iter()
            .enumerate()
            .map(|(i, s)| s.map(|v| v * c[i]))
            .collect()
    }

    fn pooled_coefficient(&self) -> T {
        *self.coefficients.value.data().last().expect("non-empty coefficients")
    }

    /// Training-mode pass; source dropout is drawn before target dropout.
    pub fn train_forward(
        &mut self,
        x: &Tensor<T>,
        key: DomainKey,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor<T>, TadannTrace<T>)> {
        let source = self.source.features_train(x, key, true, rng, None)?;
        let outs: Vec<&Tensor<T>> = (0..source.num_blocks()).map(|i| source.block_output(i)).collect();
        let fusion = self.fusion_terms(&outs);
        let target = self.target.features_train(x, key, true, rng, Some(&fusion))?;
        let mut pooled = target.pooled.clone();
        pooled.axpy(self.pooled_coefficient(), &source.pooled)?;
        let logits = self.target.classify_pooled(&pooled)?;
        Ok((logits, TadannTrace { source, target, pooled }))
    }

    /// Backpropagates class-logit gradients into the target, the source's
    /// trainable BN parameters and the fusion coefficients.
    pub fn backward(&mut self, trace: &TadannTrace<T>, grad_logits: &Tensor<T>) -> Result<()> {
        let grad_pooled = self.target.classify_backward(&trace.pooled, grad_logits)?;
        let at_outputs = self.target.backward_features(&trace.target, Some(&grad_pooled), None)?;
        let c = self.coefficients.value.data().to_vec();
        let n = at_outputs.len();
        let mut coef_grad = vec![T::zero(); n + 1];
        let mut extra = Vec::with_capacity(n);
        for (i, g) in at_outputs.iter().enumerate() {
            coef_grad[i] = g.dot(trace.source.block_output(i))?;
            extra.push(g.map(|v| v * c[i]));
        }
        coef_grad[n] = grad_pooled.dot(&trace.source.pooled)?;
        let source_pooled_grad = grad_pooled.map(|v| v * c[n]);
        self.source
            .backward_features(&trace.source, Some(&source_pooled_grad), Some(&extra))?;
        if self.coefficients.trainable {
            for (g, d) in self.coefficients.grad.data_mut().iter_mut().zip(coef_grad) {
                *g += d;
            }
        }
        Ok(())
    }

    /// Inference-mode class logits; both networks read the `key` bank.
    pub fn forward_classify(&self, x: &Tensor<T>, key: DomainKey) -> Result<Tensor<T>> {
        self.forward_pooled(x, key)
            .and_then(|p| self.target.classify_pooled(&p))
    }

    pub fn forward_pooled(&self, x: &Tensor<T>, key: DomainKey) -> Result<Tensor<T>> {
        let source = self.source.features(x, key, None)?;
        let outs: Vec<&Tensor<T>> = source.block_outputs.iter().collect();
        let fusion = self.fusion_terms(&outs);
        let target = self.target.features(x, key, Some(&fusion))?;
        let mut pooled = target.pooled;
        pooled.axpy(self.pooled_coefficient(), &source.pooled)?;
        Ok(pooled)
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = self.target.parameters_mut();
        out.extend(self.source.parameters_mut());
        out.push(&mut self.coefficients);
        out
    }

    /// Projects every coefficient onto `[0, 2]`.
    pub fn clamp_coefficients(&mut self) {
        for c in self.coefficients.value.data_mut() {
            *c = clamp_coefficient(*c);
        }
    }

    pub fn to_checkpoint(&self, ck: &mut Checkpoint) {
        ck.set_meta("tadann.calibration", self.calibration.0);
        self.source.to_checkpoint(ck);
        self.target.to_checkpoint(ck);
        ck.push(CheckpointEntry::from_tensor(
            COEFFICIENTS_NAME,
            &self.coefficients.value,
            self.coefficients.trainable,
        ));
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let calibration = DomainKey(ck.meta_parse("tadann.calibration")?);
        let source = TcnModel::from_checkpoint(ck, "source.")?;
        let target = TcnModel::from_checkpoint(ck, "target.")?;
        let e = ck.entry(COEFFICIENTS_NAME)?;
        let value = e.to_tensor::<T>()?;
        if value.shape() != [target.config().num_blocks() + 1] {
            return Err(Error::Checkpoint(
                "fusion coefficient count differs from block count".into(),
            ));
        }
        let mut coefficients = Parameter::new(COEFFICIENTS_NAME, value);
        coefficients.trainable = e.trainable;
        Ok(Self {
            source,
            target,
            coefficients,
            calibration,
        })
    }
}

impl<T: Real> Network<T> for TadannModel<T> {
    fn num_classes(&self) -> usize {
        self.target.config().num_gestures
    }

    fn prepare_domain(&mut self, key: DomainKey) {
        self.source.ensure_domain(key);
        self.target.ensure_domain(key);
    }

    fn accumulate_gradients(
        &mut self,
        x: &Tensor<T>,
        labels: &[usize],
        key: DomainKey,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let (logits, trace) = self.train_forward(x, key, rng)?;
        let (loss, grad) = softmax_cross_entropy(&logits, labels)?;
        self.backward(&trace, &grad)?;
        Ok(loss.as_f64())
    }

    fn logits(&self, x: &Tensor<T>, key: DomainKey) -> Result<Tensor<T>> {
        self.forward_classify(x, key)
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.parameters_mut()
    }

    fn after_step(&mut self) {
        self.clamp_coefficients();
    }

    fn fusion_coefficients(&self) -> Vec<f64> {
        self.coefficients.value.to_f64()
    }
}
