//! Forward and backward passes for the closed set of layers the TCN needs.
//!
//! Activations are laid out `[batch, channels, time]`. Backward functions
//! accumulate parameter gradients into caller-provided tensors so several
//! passes (e.g. source and target batches) can share one gradient buffer.

use std::collections::BTreeMap;

use rand::Rng;

use super::tensor::{gemm_acc, Real, Strided, Tensor};
use crate::{Error, Result};

fn dims3<T: Real>(op: &'static str, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    x.expect_rank(op, 3)?;
    Ok((x.dim(0), x.dim(1), x.dim(2)))
}

/// Dilated causal 1-D convolution with implicit left padding `(k - 1) * d`.
///
/// `input` is `[B, C_in, T]`, `weight` is `[C_out, C_in, k]`, `bias` is
/// `[C_out]`; the output keeps length `T`. Tap `j` reads the input
/// `(k - 1 - j) * d` steps in the past.
pub fn conv1d_causal<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    dilation: usize,
) -> Result<Tensor<T>> {
    let (batch, c_in, len) = dims3("conv1d_causal", input)?;
    weight.expect_rank("conv1d_causal", 3)?;
    let (c_out, w_in, k) = (weight.dim(0), weight.dim(1), weight.dim(2));
    if w_in != c_in {
        return Err(Error::shape(
            "conv1d_causal",
            format!("weight expects {w_in} input channels, input has {c_in}"),
        ));
    }
    bias.expect_shape("conv1d_causal", &[c_out])?;
    if dilation == 0 || k == 0 {
        return Err(Error::shape("conv1d_causal", "kernel and dilation must be positive"));
    }

    let mut out = Tensor::zeros(&[batch, c_out, len]);
    let (x, w, o) = (input.data(), weight.data(), out.data_mut());
    for b in 0..batch {
        for co in 0..c_out {
            let base = (b * c_out + co) * len;
            o[base..base + len].fill(bias.data()[co]);
        }
        for j in 0..k {
            let shift = (k - 1 - j) * dilation;
            if shift >= len {
                continue;
            }
            let n = len - shift;
            gemm_acc(
                c_out,
                c_in,
                n,
                w,
                Strided {
                    offset: j,
                    row_stride: c_in * k,
                    col_stride: k,
                },
                x,
                Strided::row_major(b * c_in * len, len),
                o,
                Strided::row_major(b * c_out * len + shift, len),
            );
        }
    }
    out.ensure_finite("conv1d_causal")?;
    Ok(out)
}

/// Backward of [`conv1d_causal`]. Weight and bias gradients are accumulated
/// when buffers are given; the input gradient is returned when requested.
pub fn conv1d_causal_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    dilation: usize,
    grad_out: &Tensor<T>,
    grad_weight: Option<&mut Tensor<T>>,
    grad_bias: Option<&mut Tensor<T>>,
    want_input_grad: bool,
) -> Result<Option<Tensor<T>>> {
    let (batch, c_in, len) = dims3("conv1d_causal_backward", input)?;
    let (c_out, k) = (weight.dim(0), weight.dim(2));
    grad_out.expect_shape("conv1d_causal_backward", &[batch, c_out, len])?;
    let g = grad_out.data();

    if let Some(gb) = grad_bias {
        gb.expect_shape("conv1d_causal_backward", &[c_out])?;
        let gb = gb.data_mut();
        for b in 0..batch {
            for (co, acc) in gb.iter_mut().enumerate() {
                let base = (b * c_out + co) * len;
                *acc += g[base..base + len].iter().copied().sum::<T>();
            }
        }
    }

    if let Some(gw) = grad_weight {
        gw.expect_shape("conv1d_causal_backward", weight.shape())?;
        let gw = gw.data_mut();
        for b in 0..batch {
            for j in 0..k {
                let shift = (k - 1 - j) * dilation;
                if shift >= len {
                    continue;
                }
                let n = len - shift;
                // dW_j[co, ci] += sum_t g[co, t + shift] * x[ci, t]
                gemm_acc(
                    c_out,
                    n,
                    c_in,
                    g,
                    Strided::row_major(b * c_out * len + shift, len),
                    input.data(),
                    Strided::row_major(b * c_in * len, len).transposed(),
                    gw,
                    Strided {
                        offset: j,
                        row_stride: c_in * k,
                        col_stride: k,
                    },
                );
            }
        }
    }

    if !want_input_grad {
        return Ok(None);
    }
    let mut grad_in = Tensor::zeros(&[batch, c_in, len]);
    let gi = grad_in.data_mut();
    for b in 0..batch {
        for j in 0..k {
            let shift = (k - 1 - j) * dilation;
            if shift >= len {
                continue;
            }
            let n = len - shift;
            // dx[ci, t] += sum_co W_j[co, ci] * g[co, t + shift]
            gemm_acc(
                c_in,
                c_out,
                n,
                weight.data(),
                Strided {
                    offset: j,
                    row_stride: k,
                    col_stride: c_in * k,
                },
                g,
                Strided::row_major(b * c_out * len + shift, len),
                gi,
                Strided::row_major(b * c_in * len, len),
            );
        }
    }
    grad_in.ensure_finite("conv1d_causal_backward")?;
    Ok(Some(grad_in))
}

/// Identifies one batch-norm statistics bank (one recording session).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DomainKey(pub u32);

impl std::fmt::Display for DomainKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> BnStats<T> {
    pub fn fresh(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

/// Running statistics per domain, keyed by session.
#[derive(Debug, Clone, PartialEq)]
pub struct BnBanks<T> {
    channels: usize,
    banks: BTreeMap<DomainKey, BnStats<T>>,
}

impl<T: Real> BnBanks<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            banks: BTreeMap::new(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Adds a bank with mean 0 and variance 1 if `key` is new.
    pub fn ensure(&mut self, key: DomainKey) {
        let channels = self.channels;
        self.banks.entry(key).or_insert_with(|| BnStats::fresh(channels));
    }

    pub fn insert(&mut self, key: DomainKey, stats: BnStats<T>) -> Result<()> {
        if stats.mean.len() != self.channels || stats.var.len() != self.channels {
            return Err(Error::shape("BnBanks::insert", "bank width mismatch"));
        }
        self.banks.insert(key, stats);
        Ok(())
    }

    pub fn get(&self, key: DomainKey) -> Result<&BnStats<T>> {
        self.banks.get(&key).ok_or(Error::UnknownDomain(key.0))
    }

    pub fn get_mut(&mut self, key: DomainKey) -> Result<&mut BnStats<T>> {
        self.banks.get_mut(&key).ok_or(Error::UnknownDomain(key.0))
    }

    pub fn contains(&self, key: DomainKey) -> bool {
        self.banks.contains_key(&key)
    }

    pub fn keys(&self) -> impl Iterator<Item = DomainKey> + '_ {
        self.banks.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (DomainKey, &BnStats<T>)> {
        self.banks.iter().map(|(k, v)| (*k, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnConfig {
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BnConfig {
    fn default() -> Self {
        Self {
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Batch statistics; the selected bank is updated by moving average.
    Train,
    /// Batch statistics; the bank is read-only.
    TrainFrozenStats,
    /// Normalize with the selected bank.
    Eval,
}

#[derive(Debug, Clone)]
pub struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    batch_stats: bool,
}

/// Batch normalization over `(batch, time)` for every channel of a
/// `[B, C, T]` tensor, reading (and in [`BnMode::Train`] updating) the bank
/// selected by `key`.
pub fn batch_norm<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    banks: &mut BnBanks<T>,
    key: DomainKey,
    mode: BnMode,
    cfg: BnConfig,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let (batch, channels, len) = dims3("batch_norm", input)?;
    gamma.expect_shape("batch_norm", &[channels])?;
    beta.expect_shape("batch_norm", &[channels])?;
    if banks.channels() != channels {
        return Err(Error::shape("batch_norm", "bank width differs from input channels"));
    }
    let bank = banks.get_mut(key)?;
    let eps = T::lit(cfg.eps);
    let count = batch * len;
    let x = input.data();

    let (mean, var, batch_stats) = if mode == BnMode::Eval {
        (bank.mean.clone(), bank.var.clone(), false)
    } else {
        if count < 2 {
            return Err(Error::shape(
                "batch_norm",
                "training mode needs at least 2 values per channel",
            ));
        }
        let mut mean = vec![T::zero(); channels];
        let mut var = vec![T::zero(); channels];
        let inv_count = T::one() / T::lit(count as f64);
        for c in 0..channels {
            let mut s = T::zero();
            for b in 0..batch {
                let base = (b * channels + c) * len;
                s += x[base..base + len].iter().copied().sum::<T>();
            }
            let m = s * inv_count;
            let mut sq = T::zero();
            for b in 0..batch {
                let base = (b * channels + c) * len;
                sq += x[base..base + len].iter().map(|&v| (v - m) * (v - m)).sum::<T>();
            }
            mean[c] = m;
            var[c] = sq * inv_count;
        }
        if mode == BnMode::Train {
            let mom = T::lit(cfg.momentum);
            let unbias = T::lit(count as f64 / (count as f64 - 1.0));
            for c in 0..channels {
                bank.mean[c] = (T::one() - mom) * bank.mean[c] + mom * mean[c];
                bank.var[c] = (T::one() - mom) * bank.var[c] + mom * var[c] * unbias;
            }
        }
        (mean, var, true)
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    {
        let (xh, o) = (xhat.data_mut(), out.data_mut());
        for b in 0..batch {
            for c in 0..channels {
                let base = (b * channels + c) * len;
                let (m, is, g, be) = (mean[c], inv_std[c], gamma.data()[c], beta.data()[c]);
                for t in base..base + len {
                    let h = (x[t] - m) * is;
                    xh[t] = h;
                    o[t] = g * h + be;
                }
            }
        }
    }
    out.ensure_finite("batch_norm")?;
    Ok((
        out,
        BnCache {
            xhat,
            inv_std,
            batch_stats,
        },
    ))
}

/// Inference-mode batch norm without touching any bank.
pub fn batch_norm_inference<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    banks: &BnBanks<T>,
    key: DomainKey,
    cfg: BnConfig,
) -> Result<Tensor<T>> {
    let (batch, channels, len) = dims3("batch_norm_inference", input)?;
    gamma.expect_shape("batch_norm_inference", &[channels])?;
    beta.expect_shape("batch_norm_inference", &[channels])?;
    let bank = banks.get(key)?;
    let eps = T::lit(cfg.eps);
    let mut out = Tensor::zeros(input.shape());
    let (x, o) = (input.data(), out.data_mut());
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * len;
            let is = T::one() / (bank.var[c] + eps).sqrt();
            let (m, g, be) = (bank.mean[c], gamma.data()[c], beta.data()[c]);
            for t in base..base + len {
                o[t] = g * ((x[t] - m) * is) + be;
            }
        }
    }
    out.ensure_finite("batch_norm_inference")?;
    Ok(out)
}

pub fn batch_norm_backward<T: Real>(
    cache: &BnCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_gamma: Option<&mut Tensor<T>>,
    grad_beta: Option<&mut Tensor<T>>,
) -> Result<Tensor<T>> {
    let (batch, channels, len) = dims3("batch_norm_backward", grad_out)?;
    grad_out.expect_shape("batch_norm_backward", cache.xhat.shape())?;
    let (g, xh) = (grad_out.data(), cache.xhat.data());
    let mut sum_g = vec![T::zero(); channels];
    let mut sum_gx = vec![T::zero(); channels];
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * len;
            for t in base..base + len {
                sum_g[c] += g[t];
                sum_gx[c] += g[t] * xh[t];
            }
        }
    }
    if let Some(gg) = grad_gamma {
        gg.data_mut().iter_mut().zip(&sum_gx).for_each(|(a, &v)| *a += v);
    }
    if let Some(gb) = grad_beta {
        gb.data_mut().iter_mut().zip(&sum_g).for_each(|(a, &v)| *a += v);
    }

    let mut grad_in = Tensor::zeros(grad_out.shape());
    let gi = grad_in.data_mut();
    let n = T::lit((batch * len) as f64);
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * len;
            let scale = gamma.data()[c] * cache.inv_std[c];
            if cache.batch_stats {
                let (mg, mgx) = (sum_g[c] / n, sum_gx[c] / n);
                for t in base..base + len {
                    gi[t] = scale * (g[t] - mg - xh[t] * mgx);
                }
            } else {
                for t in base..base + len {
                    gi[t] = scale * g[t];
                }
            }
        }
    }
    grad_in.ensure_finite("batch_norm_backward")?;
    Ok(grad_in)
}

pub fn leaky_relu<T: Real>(input: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::lit(slope);
    input.map(|v| if v > T::zero() { v } else { v * s })
}

/// `input` is the pre-activation seen by the forward pass.
pub fn leaky_relu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>, slope: f64) -> Result<Tensor<T>> {
    grad_out.expect_shape("leaky_relu_backward", input.shape())?;
    let s = T::lit(slope);
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { g * s })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Inverted dropout. Returns the output and, in training mode, the mask of
/// kept-unit scales (`0` or `1 / (1 - rate)`).
pub fn dropout<T: Real, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config("dropout", format!("rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    // Bulk 32-bit draws; a unit is dropped when its draw falls below `rate * 2^32`.
    let threshold = (rate * 4_294_967_296.0) as u64;
    let mut draws = vec![0u32; input.len()];
    rng.fill(&mut draws[..]);
    let mask_data: Vec<T> = draws
        .iter()
        .map(|&u| if (u as u64) < threshold { T::zero() } else { keep })
        .collect();
    let mask = Tensor::from_vec(input.shape(), mask_data)?;
    let out_data = input.data().iter().zip(mask.data()).map(|(&x, &m)| x * m).collect();
    Ok((Tensor::from_vec(input.shape(), out_data)?, Some(mask)))
}

pub fn dropout_backward<T: Real>(mask: Option<&Tensor<T>>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    match mask {
        None => Ok(grad_out.clone()),
        Some(m) => {
            grad_out.expect_shape("dropout_backward", m.shape())?;
            let data = grad_out.data().iter().zip(m.data()).map(|(&g, &k)| g * k).collect();
            Tensor::from_vec(m.shape(), data)
        }
    }
}

/// Mean over time: `[B, C, T] -> [B, C]`.
pub fn global_avg_pool<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, channels, len) = dims3("global_avg_pool", input)?;
    if len == 0 {
        return Err(Error::shape("global_avg_pool", "empty time axis"));
    }
    let inv = T::one() / T::lit(len as f64);
    let data = input
        .data()
        .chunks(len)
        .map(|row| row.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_vec(&[batch, channels], data)
}

pub fn global_avg_pool_backward<T: Real>(grad_out: &Tensor<T>, len: usize) -> Result<Tensor<T>> {
    grad_out.expect_rank("global_avg_pool_backward", 2)?;
    let inv = T::one() / T::lit(len as f64);
    let mut data = Vec::with_capacity(grad_out.len() * len);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g * inv, len));
    }
    Tensor::from_vec(&[grad_out.dim(0), grad_out.dim(1), len], data)
}

/// `y = x W^T + b` with `x: [B, in]`, `W: [out, in]`, `b: [out]`.
pub fn linear<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    input.expect_rank("linear", 2)?;
    weight.expect_rank("linear", 2)?;
    let (batch, fan_in) = (input.dim(0), input.dim(1));
    let fan_out = weight.dim(0);
    if weight.dim(1) != fan_in {
        return Err(Error::shape(
            "linear",
            format!("weight {:?} vs input {:?}", weight.shape(), input.shape()),
        ));
    }
    bias.expect_shape("linear", &[fan_out])?;
    let mut out = Tensor::zeros(&[batch, fan_out]);
    for row in out.data_mut().chunks_mut(fan_out) {
        row.copy_from_slice(bias.data());
    }
    gemm_acc(
        batch,
        fan_in,
        fan_out,
        input.data(),
        Strided::row_major(0, fan_in),
        weight.data(),
        Strided::row_major(0, fan_in).transposed(),
        out.data_mut(),
        Strided::row_major(0, fan_out),
    );
    out.ensure_finite("linear")?;
    Ok(out)
}

pub fn linear_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_weight: Option<&mut Tensor<T>>,
    grad_bias: Option<&mut Tensor<T>>,
) -> Result<Tensor<T>> {
    let (batch, fan_in) = (input.dim(0), input.dim(1));
    let fan_out = weight.dim(0);
    grad_out.expect_shape("linear_backward", &[batch, fan_out])?;
    if let Some(gw) = grad_weight {
        gw.expect_shape("linear_backward", weight.shape())?;
        gemm_acc(
            fan_out,
            batch,
            fan_in,
            grad_out.data(),
            Strided::row_major(0, fan_out).transposed(),
            input.data(),
            Strided::row_major(0, fan_in),
            gw.data_mut(),
            Strided::row_major(0, fan_in),
        );
    }
    if let Some(gb) = grad_bias {
        gb.expect_shape("linear_backward", &[fan_out])?;
        for row in grad_out.data().chunks(fan_out) {
            gb.data_mut().iter_mut().zip(row).for_each(|(a, &g)| *a += g);
        }
    }
    let mut grad_in = Tensor::zeros(&[batch, fan_in]);
    gemm_acc(
        batch,
        fan_out,
        fan_in,
        grad_out.data(),
        Strided::row_major(0, fan_out),
        weight.data(),
        Strided::row_major(0, fan_in),
        grad_in.data_mut(),
        Strided::row_major(0, fan_in),
    );
    Ok(grad_in)
}

/// Row-wise softmax of `[B, K]` logits.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    logits.expect_rank("softmax", 2)?;
    let k = logits.dim(1);
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.iter_mut().for_each(|v| *v = (*v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    logits.expect_rank("softmax_cross_entropy", 2)?;
    let (batch, k) = (logits.dim(0), logits.dim(1));
    if labels.len() != batch {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{} labels for batch of {batch}", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label: bad, classes: k });
    }
    let mut grad = softmax(logits)?;
    let inv_b = T::one() / T::lit(batch as f64);
    let mut loss = T::zero();
    for (b, &label) in labels.iter().enumerate() {
        let row = &logits.data()[b * k..(b + 1) * k];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss += lse - row[label];
        let g = &mut grad.data_mut()[b * k..(b + 1) * k];
        g[label] -= T::one();
        g.iter_mut().for_each(|v| *v *= inv_b);
    }
    let loss = loss * inv_b;
    if !loss.is_finite() {
        return Err(Error::NumericalFault {
            op: "softmax_cross_entropy",
        });
    }
    Ok((loss, grad))
}

/// Identity on the forward pass.
pub fn gradient_reversal<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.clone()
}

/// Multiplies the incoming gradient by `-lambda`.
pub fn gradient_reversal_backward<T: Real>(grad_out: &Tensor<T>, lambda: f64) -> Tensor<T> {
    let s = T::lit(-lambda);
    grad_out.map(|g| g * s)
}

/// Projection of a fusion coefficient onto `[0, 2]`.
pub fn clamp_coefficient<T: Real>(value: T) -> T {
    value.max(T::zero()).min(T::lit(2.0))
}
