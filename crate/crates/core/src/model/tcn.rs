use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::TcnConfig;
use super::Network;
use crate::kernel::{
    batch_norm, batch_norm_backward, batch_norm_inference, conv1d_causal, conv1d_causal_backward, dropout,
    dropout_backward, global_avg_pool, global_avg_pool_backward, gradient_reversal, gradient_reversal_backward,
    leaky_relu, leaky_relu_backward, linear, linear_backward, softmax_cross_entropy, BnBanks, BnCache, BnMode,
    Checkpoint, CheckpointEntry, DomainKey, Parameter, Real, Tensor,
};
use crate::{rng, Error, Result};

/// Dilated causal conv, batch norm (per-session banks), leaky ReLU, dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalBlock<T> {
    pub conv_weight: Parameter<T>,
    pub conv_bias: Parameter<T>,
    pub bn_gamma: Parameter<T>,
    pub bn_beta: Parameter<T>,
    pub banks: BnBanks<T>,
    pub dilation: usize,
}

#[derive(Debug, Clone)]
struct BlockTrace<T> {
    input: Tensor<T>,
    bn: BnCache<T>,
    normalized: Tensor<T>,
    mask: Option<Tensor<T>>,
    output: Tensor<T>,
}

/// Activations kept by a training-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct FeatureTrace<T> {
    blocks: Vec<BlockTrace<T>>,
    len: usize,
    pub pooled: Tensor<T>,
}

impl<T: Real> FeatureTrace<T> {
    /// Post-dropout output of block `i`, before any fusion term is added.
    pub fn block_output(&self, i: usize) -> &Tensor<T> {
        &self.blocks[i].output
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// Inference-mode activations.
#[derive(Debug, Clone)]
pub struct Features<T> {
    pub block_outputs: Vec<Tensor<T>>,
    pub pooled: Tensor<T>,
}

/// TCN gesture classifier with an attached two-unit domain head.
#[derive(Debug, Clone, PartialEq)]
pub struct TcnModel<T> {
    config: TcnConfig,
    prefix: String,
    pub blocks: Vec<TemporalBlock<T>>,
    pub output_weight: Parameter<T>,
    pub output_bias: Parameter<T>,
    pub domain_weight: Parameter<T>,
    pub domain_bias: Parameter<T>,
}

fn uniform<T: Real>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-bound..=bound))).collect();
    Tensor::from_vec(shape, data).expect("shape matches value count")
}

impl<T: Real> TcnModel<T> {
    /// Randomly initialized model (uniform `±1/sqrt(fan_in)` for conv and
    /// linear layers, `gamma = 1`, `beta = 0`).
    pub fn new(config: TcnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::rng_for(seed, &[rng::tag("tcn-init")]);
        let k = config.kernel_size;
        let mut blocks = Vec::with_capacity(config.channels.len());
        let mut c_in = config.in_channels;
        for (i, &c_out) in config.channels.iter().enumerate() {
            let bound = 1.0 / ((c_in * k) as f64).sqrt();
            blocks.push(TemporalBlock {
                conv_weight: Parameter::new(
                    format!("block{i}.conv.weight"),
                    uniform(&[c_out, c_in, k], bound, &mut rng),
                ),
                conv_bias: Parameter::new(format!("block{i}.conv.bias"), uniform(&[c_out], bound, &mut rng)),
                bn_gamma: Parameter::new(format!("block{i}.bn.gamma"), Tensor::full(&[c_out], T::one())),
                bn_beta: Parameter::new(format!("block{i}.bn.beta"), Tensor::zeros(&[c_out])),
                banks: BnBanks::new(c_out),
                dilation: config.dilation(i),
            });
            c_in = c_out;
        }
        let width = c_in;
        let bound = 1.0 / (width as f64).sqrt();
        let g = config.num_gestures;
        Ok(Self {
            output_weight: Parameter::new("output.weight", uniform(&[g, width], bound, &mut rng)),
            output_bias: Parameter::new("output.bias", uniform(&[g], bound, &mut rng)),
            domain_weight: Parameter::new("domain_head.weight", uniform(&[2, width], bound, &mut rng)),
            domain_bias: Parameter::new("domain_head.bias", uniform(&[2], bound, &mut rng)),
            blocks,
            config,
            prefix: String::new(),
        })
    }

    /// Prepends `prefix` to every parameter name (and checkpoint key) so two
    /// networks can share one optimizer and one checkpoint.
    pub fn set_prefix(&mut self, prefix: &str) {
        let old = self.prefix.len();
        for p in self.parameters_mut() {
            let base = p.name()[old..].to_string();
            p.rename(format!("{prefix}{base}"));
        }
        self.prefix = prefix.to_string();
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn config(&self) -> &TcnConfig {
        &self.config
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend([&b.conv_weight, &b.conv_bias, &b.bn_gamma, &b.bn_beta]);
        }
        out.extend([
            &self.output_weight,
            &self.output_bias,
            &self.domain_weight,
            &self.domain_bias,
        ]);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.extend([&mut b.conv_weight, &mut b.conv_bias, &mut b.bn_gamma, &mut b.bn_beta]);
        }
        out.extend([
            &mut self.output_weight,
            &mut self.output_bias,
            &mut self.domain_weight,
            &mut self.domain_bias,
        ]);
        out
    }

    /// Learnable scalars of the classifier, domain head excluded, counted
    /// tensor by tensor.
    pub fn classifier_parameter_count(&self) -> usize {
        self.parameters()
            .iter()
            .filter(|p| !p.name().contains("domain_head."))
            .map(|p| p.numel())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(Parameter::zero_grad);
    }

    /// Creates the batch-norm bank for `key` in every block if missing.
    pub fn ensure_domain(&mut self, key: DomainKey) {
        self.blocks.iter_mut().for_each(|b| b.banks.ensure(key));
    }

    pub fn has_domain(&self, key: DomainKey) -> bool {
        self.blocks.iter().all(|b| b.banks.contains(key))
    }

    /// Copies the running statistics of `from` into a bank for `to`.
    pub fn fork_domain(&mut self, from: DomainKey, to: DomainKey) -> Result<()> {
        for b in &mut self.blocks {
            let stats = b.banks.get(from)?.clone();
            b.banks.insert(to, stats)?;
        }
        Ok(())
    }

    /// Marks every parameter non-trainable except batch-norm gamma/beta.
    pub fn freeze_except_batch_norm(&mut self) {
        for p in self.parameters_mut() {
            p.trainable = p.name().contains(".bn.");
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize)> {
        x.expect_rank("tcn forward", 3)?;
        let c = &self.config;
        if x.dim(1) != c.in_channels || x.dim(2) != c.window_len {
            return Err(Error::shape(
                "tcn forward",
                format!("expected [B, {}, {}], got {:?}", c.in_channels, c.window_len, x.shape()),
            ));
        }
        Ok((x.dim(0), x.dim(2)))
    }

    fn check_fusion(&self, fusion: Option<&[Tensor<T>]>) -> Result<()> {
        if let Some(f) = fusion {
            if f.len() != self.blocks.len() {
                return Err(Error::shape(
                    "tcn fusion",
                    format!("{} fusion terms for {} blocks", f.len(), self.blocks.len()),
                ));
            }
        }
        Ok(())
    }

    /// Training-mode feature extractor. `fusion[i]`, when given, is added to
    /// the output of block `i` before it feeds the next block (or pooling).
    pub fn features_train<R: Rng + ?Sized>(
        &mut self,
        x: &Tensor<T>,
        key: DomainKey,
        update_bank: bool,
        rng: &mut R,
        fusion: Option<&[Tensor<T>]>,
    ) -> Result<FeatureTrace<T>> {
        let (_, len) = self.check_input(x)?;
        self.check_fusion(fusion)?;
        self.ensure_domain(key);
        let mode = if update_bank {
            BnMode::Train
        } else {
            BnMode::TrainFrozenStats
        };
        let (slope, rate, bn_cfg) = (self.config.leaky_slope, self.config.dropout, self.config.bn);
        let mut traces = Vec::with_capacity(self.blocks.len());
        let mut current = x.clone();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let conv = conv1d_causal(
                &current,
                &block.conv_weight.value,
                &block.conv_bias.value,
                block.dilation,
            )?;
            let (normalized, bn) = batch_norm(
                &conv,
                &block.bn_gamma.value,
                &block.bn_beta.value,
                &mut block.banks,
                key,
                mode,
                bn_cfg,
            )?;
            let activated = leaky_relu(&normalized, slope);
            let (output, mask) = dropout(&activated, rate, true, rng)?;
            let mut next = output.clone();
            if let Some(f) = fusion {
                next.add_assign(&f[i])?;
            }
            traces.push(BlockTrace {
                input: std::mem::replace(&mut current, next),
                bn,
                normalized,
                mask,
                output,
            });
        }
        let pooled = global_avg_pool(&current)?;
        Ok(FeatureTrace {
            blocks: traces,
            len,
            pooled,
        })
    }

    /// Inference-mode feature extractor; deterministic and read-only.
    pub fn features(&self, x: &Tensor<T>, key: DomainKey, fusion: Option<&[Tensor<T>]>) -> Result<Features<T>> {
        self.check_input(x)?;
        self.check_fusion(fusion)?;
        let slope = self.config.leaky_slope;
        let mut outputs = Vec::with_capacity(self.blocks.len());
        let mut current = x.clone();
        for (i, block) in self.blocks.iter().enumerate() {
            let conv = conv1d_causal(
                &current,
                &block.conv_weight.value,
                &block.conv_bias.value,
                block.dilation,
            )?;
            let normalized = batch_norm_inference(
                &conv,
                &block.bn_gamma.value,
                &block.bn_beta.value,
                &block.banks,
                key,
                self.config.bn,
            )?;
            let output = leaky_relu(&normalized, slope);
            current = output.clone();
            if let Some(f) = fusion {
                current.add_assign(&f[i])?;
            }
            outputs.push(output);
        }
        let pooled = global_avg_pool(&current)?;
        Ok(Features {
            block_outputs: outputs,
            pooled,
        })
    }

    /// Backpropagates from the pooled features (and optional extra gradients
    /// arriving at each block output) into every block parameter. Gradients
    /// of non-trainable conv weights are skipped. Returns the gradient at each
    /// (fused) block output.
    pub fn backward_features(
        &mut self,
        trace: &FeatureTrace<T>,
        grad_pooled: Option<&Tensor<T>>,
        extra: Option<&[Tensor<T>]>,
    ) -> Result<Vec<Tensor<T>>> {
        let n = self.blocks.len();
        if trace.blocks.len() != n {
            return Err(Error::shape("tcn backward", "trace does not match model depth"));
        }
        let slope = self.config.leaky_slope;
        let last_shape = trace.blocks[n - 1].output.shape().to_vec();
        let mut grad = match grad_pooled {
            Some(g) => global_avg_pool_backward(g, trace.len)?,
            None => Tensor::zeros(&last_shape),
        };
        let mut at_outputs = vec![Tensor::zeros(&[0]); n];
        for i in (0..n).rev() {
            let bt = &trace.blocks[i];
            if let Some(e) = extra {
                grad.add_assign(&e[i])?;
            }
            at_outputs[i] = grad.clone();
            let block = &mut self.blocks[i];
            let g = dropout_backward(bt.mask.as_ref(), &grad)?;
            let g = leaky_relu_backward(&bt.normalized, &g, slope)?;
            let g = batch_norm_backward(
                &bt.bn,
                &block.bn_gamma.value,
                &g,
                block.bn_gamma.trainable.then_some(&mut block.bn_gamma.grad),
                block.bn_beta.trainable.then_some(&mut block.bn_beta.grad),
            )?;
            let input_grad = conv1d_causal_backward(
                &bt.input,
                &block.conv_weight.value,
                block.dilation,
                &g,
                block.conv_weight.trainable.then_some(&mut block.conv_weight.grad),
                block.conv_bias.trainable.then_some(&mut block.conv_bias.grad),
                i > 0,
            )?;
            if let Some(gi) = input_grad {
                grad = gi;
            }
        }
        Ok(at_outputs)
    }

    pub fn classify_pooled(&self, pooled: &Tensor<T>) -> Result<Tensor<T>> {
        linear(pooled, &self.output_weight.value, &self.output_bias.value)
    }

    /// Accumulates output-layer gradients and returns the pooled-feature gradient.
    pub fn classify_backward(&mut self, pooled: &Tensor<T>, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        linear_backward(
            pooled,
            &self.output_weight.value,
            grad_logits,
            self.output_weight.trainable.then_some(&mut self.output_weight.grad),
            self.output_bias.trainable.then_some(&mut self.output_bias.grad),
        )
    }

    /// Gradient reversal followed by the two-unit domain head.
    pub fn domain_pooled(&self, pooled: &Tensor<T>) -> Result<Tensor<T>> {
        linear(
            &gradient_reversal(pooled),
            &self.domain_weight.value,
            &self.domain_bias.value,
        )
    }

    /// Accumulates domain-head gradients and returns the pooled-feature
    /// gradient after reversal (scaled by `-lambda`).
    pub fn domain_backward(&mut self, pooled: &Tensor<T>, grad_logits: &Tensor<T>, lambda: f64) -> Result<Tensor<T>> {
        let g = linear_backward(
            pooled,
            &self.domain_weight.value,
            grad_logits,
            self.domain_weight.trainable.then_some(&mut self.domain_weight.grad),
            self.domain_bias.trainable.then_some(&mut self.domain_bias.grad),
        )?;
        Ok(gradient_reversal_backward(&g, lambda))
    }

    /// Class logits in inference mode.
    pub fn forward_classify(&self, x: &Tensor<T>, key: DomainKey) -> Result<Tensor<T>> {
        let f = self.features(x, key, None)?;
        self.classify_pooled(&f.pooled)
    }

    /// Domain logits of a training-mode pass.
    pub fn forward_domain<R: Rng + ?Sized>(
        &mut self,
        x: &Tensor<T>,
        key: DomainKey,
        rng: &mut R,
    ) -> Result<(Tensor<T>, FeatureTrace<T>)> {
        let trace = self.features_train(x, key, true, rng, None)?;
        Ok((self.domain_pooled(&trace.pooled)?, trace))
    }

    pub fn to_checkpoint(&self, ck: &mut Checkpoint) {
        let prefix = &self.prefix;
        for (k, v) in self.config.to_kv() {
            ck.set_meta(format!("{prefix}config.{k}"), v);
        }
        for p in self.parameters() {
            ck.push(CheckpointEntry::from_tensor(p.name(), &p.value, p.trainable));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            for (key, stats) in b.banks.iter() {
                ck.push(CheckpointEntry::from_values(
                    format!("{prefix}block{i}.bn.bank.{}.mean", key.0),
                    &stats.mean,
                ));
                ck.push(CheckpointEntry::from_values(
                    format!("{prefix}block{i}.bn.bank.{}.var", key.0),
                    &stats.var,
                ));
            }
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, prefix: &str) -> Result<Self> {
        let meta_prefix = format!("{prefix}config.");
        let kv: Vec<(String, String)> = ck
            .meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&meta_prefix).map(|s| (s.to_string(), v.clone())))
            .collect();
        let config = TcnConfig::from_kv(&kv)?;
        let mut model = TcnModel::new(config, 0)?;
        model.set_prefix(prefix);
        for p in model.parameters_mut() {
            let e = ck.entry(p.name())?;
            let t = e.to_tensor::<T>()?;
            if t.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "{}: stored shape {:?}, model expects {:?}",
                    e.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t;
            p.trainable = e.trainable;
        }
        for (i, b) in model.blocks.iter_mut().enumerate() {
            let bank_prefix = format!("{prefix}block{i}.bn.bank.");
            for e in ck.entries_with_prefix(&bank_prefix) {
                let rest = &e.name[bank_prefix.len()..];
                let Some(id) = rest.strip_suffix(".mean") else {
                    continue;
                };
                let id: u32 = id
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad bank name {}", e.name)))?;
                let mean = e.to_tensor::<T>()?.into_data();
                let var = ck
                    .entry(&format!("{bank_prefix}{id}.var"))?
                    .to_tensor::<T>()?
                    .into_data();
                b.banks.insert(DomainKey(id), crate::kernel::BnStats { mean, var })?;
            }
        }
        Ok(model)
    }
}

impl<T: Real> Network<T> for TcnModel<T> {
    fn num_classes(&self) -> usize {
        self.config.num_gestures
    }

    fn prepare_domain(&mut self, key: DomainKey) {
        self.ensure_domain(key);
    }

    fn accumulate_gradients(
        &mut self,
        x: &Tensor<T>,
        labels: &[usize],
        key: DomainKey,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let trace = self.features_train(x, key, true, rng, None)?;
        let logits = self.classify_pooled(&trace.pooled)?;
        let (loss, grad_logits) = softmax_cross_entropy(&logits, labels)?;
        let grad_pooled = self.classify_backward(&trace.pooled, &grad_logits)?;
        self.backward_features(&trace, Some(&grad_pooled), None)?;
        Ok(loss.as_f64())
    }

    fn logits(&self, x: &Tensor<T>, key: DomainKey) -> Result<Tensor<T>> {
        self.forward_classify(x, key)
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.parameters_mut()
    }
}
