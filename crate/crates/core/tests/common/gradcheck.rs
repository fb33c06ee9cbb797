//! Central finite-difference checks of every differentiable op and of the
//! assembled networks, in f64.
//!
//! Each op is checked through the scalar `L = sum(out * R)` with a random
//! probe `R`, so the analytic input to every backward function is `R`. The
//! error of a case is `|a - n| / (|a| + |n|)` over the concatenated gradient
//! vectors (2-norms), with `a` analytic and `n` numeric.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use semgkit::kernel::*;
use semgkit::model::{build_tadann, Network, TcnConfig, TcnModel};
use semgkit::training::{adann_gradients, AdannSpec};

pub const TOLERANCE: f64 = 1e-4;
const H: f64 = 1e-6;

pub struct OpReport {
    pub op: &'static str,
    pub cases: usize,
    pub worst: f64,
}

fn rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
}

fn normal(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.sample(StandardNormal)).collect()).unwrap()
}

fn probe(out: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Central differences of `f` with respect to every element of `x`.
fn numeric(x: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Vec<f64> {
    let mut probe_x = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe_x.data()[i];
            probe_x.data_mut()[i] = orig + H;
            let up = f(&probe_x);
            probe_x.data_mut()[i] = orig - H;
            let down = f(&probe_x);
            probe_x.data_mut()[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

pub fn conv(seed: u64) -> f64 {
    let mut r = rng(seed, 1);
    let (b, cin, cout, t) = (2, 3, 4, 9);
    let k = 1 + seed as usize % 3;
    let d = 1 << (seed as usize % 3);
    let x = normal(&mut r, &[b, cin, t]);
    let w = normal(&mut r, &[cout, cin, k]);
    let bias = normal(&mut r, &[cout]);
    let probe_r = normal(&mut r, &[b, cout, t]);
    let (mut gw, mut gb) = (Tensor::zeros(w.shape()), Tensor::zeros(bias.shape()));
    let gx = conv1d_causal_backward(&x, &w, d, &probe_r, Some(&mut gw), Some(&mut gb), true)
        .unwrap()
        .unwrap();
    let nx = numeric(&x, |x| probe(&conv1d_causal(x, &w, &bias, d).unwrap(), &probe_r));
    let nw = numeric(&w, |w| probe(&conv1d_causal(&x, w, &bias, d).unwrap(), &probe_r));
    let nb = numeric(&bias, |bias| probe(&conv1d_causal(&x, &w, bias, d).unwrap(), &probe_r));
    relative_error(&concat(&[gx.data(), gw.data(), gb.data()]), &concat(&[&nx, &nw, &nb]))
}

pub fn batch_norm_op(seed: u64) -> f64 {
    let mut r = rng(seed, 2);
    let (b, c, t) = (3, 2, 5);
    let mode = [BnMode::Train, BnMode::TrainFrozenStats, BnMode::Eval][seed as usize % 3];
    let x = normal(&mut r, &[b, c, t]);
    let gamma = normal(&mut r, &[c]);
    let beta = normal(&mut r, &[c]);
    let probe_r = normal(&mut r, &[b, c, t]);
    let key = DomainKey(1);
    let mut banks = BnBanks::new(c);
    banks.ensure(key);
    {
        let s = banks.get_mut(key).unwrap();
        for i in 0..c {
            s.mean[i] = r.random_range(-1.0..1.0);
            s.var[i] = r.random_range(0.5..2.0);
        }
    }
    let cfg = BnConfig::default();
    let frozen = banks.clone();
    let eval = |x: &Tensor<f64>, g: &Tensor<f64>, be: &Tensor<f64>| {
        let mut banks = frozen.clone();
        probe(&batch_norm(x, g, be, &mut banks, key, mode, cfg).unwrap().0, &probe_r)
    };
    let (_, cache) = batch_norm(&x, &gamma, &beta, &mut banks.clone(), key, mode, cfg).unwrap();
    let (mut gg, mut gbeta) = (Tensor::zeros(&[c]), Tensor::zeros(&[c]));
    let gx = batch_norm_backward(&cache, &gamma, &probe_r, Some(&mut gg), Some(&mut gbeta)).unwrap();
    let nx = numeric(&x, |x| eval(x, &gamma, &beta));
    let ng = numeric(&gamma, |g| eval(&x, g, &beta));
    let nb = numeric(&beta, |be| eval(&x, &gamma, be));
    relative_error(
        &concat(&[gx.data(), gg.data(), gbeta.data()]),
        &concat(&[&nx, &ng, &nb]),
    )
}

pub fn leaky(seed: u64) -> f64 {
    let mut r = rng(seed, 3);
    let slope = r.random_range(0.01..0.5);
    // Keep inputs away from the kink so differences stay on one side.
    let data: Vec<f64> = (0..30)
        .map(|_| {
            let v: f64 = r.sample(StandardNormal);
            if v.abs() < 0.05 {
                v.signum() * 0.05 + v
            } else {
                v
            }
        })
        .collect();
    let x = Tensor::from_vec(&[2, 3, 5], data).unwrap();
    let probe_r = normal(&mut r, &[2, 3, 5]);
    let gx = leaky_relu_backward(&x, &probe_r, slope).unwrap();
    let nx = numeric(&x, |x| probe(&leaky_relu(x, slope), &probe_r));
    relative_error(gx.data(), &nx)
}

pub fn dropout_op(seed: u64) -> f64 {
    let mut r = rng(seed, 4);
    let x = normal(&mut r, &[2, 3, 6]);
    let probe_r = normal(&mut r, &[2, 3, 6]);
    let rate = r.random_range(0.1..0.8);
    let mask_seed = seed ^ 0xD0;
    let run = |x: &Tensor<f64>| dropout(x, rate, true, &mut ChaCha8Rng::seed_from_u64(mask_seed)).unwrap();
    let (_, mask) = run(&x);
    let gx = dropout_backward(mask.as_ref(), &probe_r).unwrap();
    let nx = numeric(&x, |x| probe(&run(x).0, &probe_r));
    relative_error(gx.data(), &nx)
}

pub fn pool(seed: u64) -> f64 {
    let mut r = rng(seed, 5);
    let t = 2 + seed as usize % 7;
    let x = normal(&mut r, &[2, 3, t]);
    let probe_r = normal(&mut r, &[2, 3]);
    let gx = global_avg_pool_backward(&probe_r, t).unwrap();
    let nx = numeric(&x, |x| probe(&global_avg_pool(x).unwrap(), &probe_r));
    relative_error(gx.data(), &nx)
}

pub fn linear_op(seed: u64) -> f64 {
    let mut r = rng(seed, 6);
    let (b, fin, fout) = (4, 5, 3);
    let x = normal(&mut r, &[b, fin]);
    let w = normal(&mut r, &[fout, fin]);
    let bias = normal(&mut r, &[fout]);
    let probe_r = normal(&mut r, &[b, fout]);
    let (mut gw, mut gb) = (Tensor::zeros(w.shape()), Tensor::zeros(bias.shape()));
    let gx = linear_backward(&x, &w, &probe_r, Some(&mut gw), Some(&mut gb)).unwrap();
    let nx = numeric(&x, |x| probe(&linear(x, &w, &bias).unwrap(), &probe_r));
    let nw = numeric(&w, |w| probe(&linear(&x, w, &bias).unwrap(), &probe_r));
    let nb = numeric(&bias, |bias| probe(&linear(&x, &w, bias).unwrap(), &probe_r));
    relative_error(&concat(&[gx.data(), gw.data(), gb.data()]), &concat(&[&nx, &nw, &nb]))
}

pub fn cross_entropy(seed: u64) -> f64 {
    let mut r = rng(seed, 7);
    let (b, k) = (5, 4);
    let logits = normal(&mut r, &[b, k]).map(|v| 3.0 * v);
    let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..k)).collect();
    let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
    let n = numeric(&logits, |l| softmax_cross_entropy(l, &labels).unwrap().0);
    relative_error(g.data(), &n)
}

/// The reversal layer is the identity forward; its backward must be `-lambda`
/// times the identity's numeric Jacobian-vector product.
pub fn reversal(seed: u64) -> f64 {
    let mut r = rng(seed, 8);
    let lambda = r.random_range(0.0..2.0);
    let x = normal(&mut r, &[3, 4]);
    let probe_r = normal(&mut r, &[3, 4]);
    let g = gradient_reversal_backward(&probe_r, lambda);
    let n: Vec<f64> = numeric(&x, |x| probe(&gradient_reversal(x), &probe_r))
        .into_iter()
        .map(|v| -lambda * v)
        .collect();
    relative_error(g.data(), &n)
}

fn tiny_config(seed: u64) -> TcnConfig {
    TcnConfig {
        in_channels: 3,
        window_len: 12,
        channels: vec![3, 4, 3],
        kernel_size: 2 + seed as usize % 2,
        dropout: 0.0,
        leaky_slope: 0.1,
        num_gestures: 4,
        ..TcnConfig::default()
    }
}

fn batch(seed: u64, salt: u64, n: usize, cfg: &TcnConfig) -> (Tensor<f64>, Vec<usize>) {
    let mut r = rng(seed, salt);
    let x = normal(&mut r, &[n, cfg.in_channels, cfg.window_len]);
    let labels = (0..n).map(|_| r.random_range(0..cfg.num_gestures)).collect();
    (x, labels)
}

/// Compares accumulated gradients of every trainable parameter with central
/// differences of the loss `loss` returns.
fn check_network<N: Network<f64>>(model: &N, loss: impl Fn(&mut N) -> f64) -> f64 {
    let mut m = model.clone();
    m.zero_grad();
    loss(&mut m);
    let mut analytic = Vec::new();
    let mut slots = Vec::new();
    for (pi, p) in m.params_mut().into_iter().enumerate() {
        if p.trainable {
            analytic.extend_from_slice(p.grad.data());
            slots.extend((0..p.numel()).map(|i| (pi, i)));
        }
    }
    let numeric: Vec<f64> = slots
        .iter()
        .map(|&(pi, i)| {
            let eval = |delta: f64| {
                let mut m = model.clone();
                m.params_mut()[pi].value.data_mut()[i] += delta;
                loss(&mut m)
            };
            (eval(H) - eval(-H)) / (2.0 * H)
        })
        .collect();
    relative_error(&analytic, &numeric)
}

pub fn tcn(seed: u64) -> f64 {
    let cfg = tiny_config(seed);
    let model = TcnModel::<f64>::new(cfg.clone(), seed).unwrap();
    let (x, labels) = batch(seed, 9, 3, &cfg);
    check_network(&model, |m| {
        m.accumulate_gradients(&x, &labels, DomainKey(1), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
    })
}

pub fn tadann(seed: u64) -> f64 {
    let cfg = tiny_config(seed);
    let source = TcnModel::<f64>::new(cfg.clone(), seed).unwrap();
    let mut model = build_tadann(source, &cfg, DomainKey(2), seed + 100).unwrap();
    let mut r = rng(seed, 10);
    for c in model.coefficients.value.data_mut() {
        *c = r.random_range(0.2..1.8);
    }
    let (x, labels) = batch(seed, 11, 3, &cfg);
    check_network(&model, |m| {
        m.accumulate_gradients(&x, &labels, DomainKey(2), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
    })
}

/// One adversarial step. Feature parameters see `cls - lambda * w * dom`
/// through the reversal layer; domain-head parameters see `w * dom`.
pub fn adann(seed: u64) -> f64 {
    let cfg = tiny_config(seed);
    let mut model = TcnModel::<f64>::new(cfg.clone(), seed).unwrap();
    model.ensure_domain(DomainKey(1));
    model.ensure_domain(DomainKey(2));
    let spec = AdannSpec {
        lambda: 0.7,
        domain_loss_weight: 1.3,
        ..AdannSpec::default()
    };
    let (xs, ls) = batch(seed, 12, 3, &cfg);
    let (xt, _) = batch(seed, 13, 3, &cfg);
    let losses = |m: &mut TcnModel<f64>| {
        adann_gradients(
            m,
            &xs,
            &ls,
            DomainKey(1),
            &xt,
            DomainKey(2),
            &spec,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap()
    };
    let mut m = model.clone();
    m.zero_grad();
    losses(&mut m);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let names: Vec<(String, usize)> = m
        .parameters()
        .iter()
        .map(|p| (p.name().to_string(), p.numel()))
        .collect();
    for (pi, (name, numel)) in names.iter().enumerate() {
        analytic.extend_from_slice(m.parameters()[pi].grad.data());
        let head = name.contains("domain_head.");
        for i in 0..*numel {
            let eval = |delta: f64| {
                let mut m = model.clone();
                m.parameters_mut()[pi].value.data_mut()[i] += delta;
                let l = losses(&mut m);
                if head {
                    spec.domain_loss_weight * l.domain
                } else {
                    l.classification - spec.lambda * spec.domain_loss_weight * l.domain
                }
            };
            numeric.push((eval(H) - eval(-H)) / (2.0 * H));
        }
    }
    relative_error(&analytic, &numeric)
}

pub type Check = (&'static str, fn(u64) -> f64);

pub const CHECKS: [Check; 11] = [
    ("conv1d_causal", conv),
    ("batch_norm", batch_norm_op),
    ("leaky_relu", leaky),
    ("dropout", dropout_op),
    ("global_avg_pool", pool),
    ("linear", linear_op),
    ("softmax_cross_entropy", cross_entropy),
    ("gradient_reversal", reversal),
    ("tcn", tcn),
    ("tadann", tadann),
    ("adann_step", adann),
];

pub fn run(cases: u64) -> Vec<OpReport> {
    CHECKS
        .iter()
        .map(|&(op, f)| OpReport {
            op,
            cases: cases as usize,
            worst: (0..cases).map(f).fold(0.0, f64::max),
        })
        .collect()
}
