use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semgkit::kernel::*;
use semgkit::model::{argmax, TcnConfig, TcnModel};

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape, data.to_vec()).unwrap()
}

#[test]
fn pointwise_identity_conv() {
    let x = t(&[1, 2, 3], &[1.0, 2.0, 3.0, -4.0, 5.0, -6.0]);
    let w = t(&[2, 2, 1], &[1.0, 0.0, 0.0, 1.0]);
    let y = conv1d_causal(&x, &w, &Tensor::zeros(&[2]), 1).unwrap();
    assert_eq!(y, x);
}

#[test]
fn causal_conv_pads_on_the_left() {
    let x = t(&[1, 1, 3], &[1.0, 2.0, 3.0]);
    let w = t(&[1, 1, 2], &[1.0, 1.0]);
    let y = conv1d_causal(&x, &w, &Tensor::zeros(&[1]), 1).unwrap();
    assert_eq!(y.data(), &[1.0, 3.0, 5.0]);
    // dilation 2 reaches two steps back
    let y = conv1d_causal(&x, &w, &Tensor::zeros(&[1]), 2).unwrap();
    assert_eq!(y.data(), &[1.0, 2.0, 4.0]);
    assert!(conv1d_causal(&x, &t(&[1, 2, 2], &[1.0; 4]), &Tensor::zeros(&[1]), 1).is_err());
}

#[test]
fn batch_norm_of_standardized_input() {
    // per channel: mean 0 and biased variance 1
    let x = t(&[2, 2, 2], &[1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0]);
    let (gamma, beta) = (Tensor::full(&[2], 1.0), Tensor::zeros(&[2]));
    let mut banks = BnBanks::new(2);
    banks.ensure(DomainKey(1));
    let cfg = BnConfig::default();
    let (y, _) = batch_norm(&x, &gamma, &beta, &mut banks, DomainKey(1), BnMode::Train, cfg).unwrap();
    // the epsilon inside the square root bounds the deviation by eps / 2
    for (a, b) in y.data().iter().zip(x.data()) {
        assert!((a - b).abs() <= cfg.eps / 2.0 * b.abs() + 1e-15);
    }
    let tight = BnConfig { eps: 1e-9, ..cfg };
    let (y, _) = batch_norm(&x, &gamma, &beta, &mut banks, DomainKey(1), BnMode::Train, tight).unwrap();
    for (a, b) in y.data().iter().zip(x.data()) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!(batch_norm(&x, &gamma, &beta, &mut banks, DomainKey(9), BnMode::Train, cfg).is_err());
}

#[test]
fn batch_norm_banks_are_isolated() {
    let mut banks = BnBanks::new(1);
    banks.ensure(DomainKey(1));
    banks.ensure(DomainKey(2));
    let (gamma, beta) = (Tensor::full(&[1], 1.0), Tensor::zeros(&[1]));
    let a = t(&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]);
    let b = t(&[1, 1, 4], &[10.0, 20.0, 30.0, 50.0]);
    let cfg = BnConfig::default();
    batch_norm(&a, &gamma, &beta, &mut banks, DomainKey(1), BnMode::Train, cfg).unwrap();
    let snapshot = banks.get(DomainKey(1)).unwrap().clone();
    for _ in 0..5 {
        batch_norm(&b, &gamma, &beta, &mut banks, DomainKey(2), BnMode::Train, cfg).unwrap();
    }
    assert_eq!(banks.get(DomainKey(1)).unwrap(), &snapshot);
    assert_ne!(banks.get(DomainKey(2)).unwrap(), &snapshot);
    // frozen statistics and evaluation never write
    let before = banks.clone();
    batch_norm(
        &b,
        &gamma,
        &beta,
        &mut banks,
        DomainKey(2),
        BnMode::TrainFrozenStats,
        cfg,
    )
    .unwrap();
    batch_norm(&b, &gamma, &beta, &mut banks, DomainKey(2), BnMode::Eval, cfg).unwrap();
    assert_eq!(banks, before);
}

#[test]
fn small_op_examples() {
    assert_eq!(leaky_relu(&t(&[2], &[-2.0, 3.0]), 0.1).data(), &[-0.2, 3.0]);
    let pooled = global_avg_pool(&Tensor::full(&[2, 3, 5], 1.75)).unwrap();
    assert_eq!(pooled.data(), &[1.75; 6]);
    let (loss, _) = softmax_cross_entropy(&Tensor::<f64>::zeros(&[1, 11]), &[4]).unwrap();
    assert!((loss - 11f64.ln()).abs() < 1e-12);
    assert!(softmax_cross_entropy(&Tensor::<f64>::zeros(&[1, 11]), &[11]).is_err());
}

#[test]
fn gradient_reversal_examples() {
    let x = t(&[3], &[1.0, 2.0, 3.0]);
    assert_eq!(gradient_reversal(&x), x);
    let g = t(&[2], &[1.0, -1.0]);
    assert_eq!(gradient_reversal_backward(&g, 1.0).data(), &[-1.0, 1.0]);
    assert!(gradient_reversal_backward(&g, 0.0).data().iter().all(|v| *v == 0.0));
}

#[test]
fn clamp_examples() {
    assert_eq!(clamp_coefficient(2.5), 2.0);
    assert_eq!(clamp_coefficient(-0.1), 0.0);
    assert_eq!(clamp_coefficient(1.37), 1.37);
}

#[test]
fn receptive_field_formula() {
    assert_eq!(receptive_field(3, &[1, 2, 4]), 15);
    assert_eq!(receptive_field(1, &[1, 2, 4]), 1);
}

fn toy() -> (TcnModel<f64>, Tensor<f64>) {
    let config = TcnConfig {
        in_channels: 3,
        window_len: 16,
        channels: vec![4, 4],
        dropout: 0.0,
        num_gestures: 3,
        ..TcnConfig::default()
    };
    let mut model = TcnModel::new(config, 5).unwrap();
    model.ensure_domain(DomainKey(1));
    let x = Tensor::from_vec(
        &[4, 3, 16],
        (0..4 * 3 * 16).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect(),
    )
    .unwrap();
    (model, x)
}

/// Feature-extractor gradients of the domain loss alone.
fn domain_feature_grads(lambda: f64) -> Vec<f64> {
    let (mut model, x) = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, trace) = model.forward_domain(&x, DomainKey(1), &mut rng).unwrap();
    let (_, grad) = softmax_cross_entropy(&logits, &[0, 1, 0, 1]).unwrap();
    let g = model.domain_backward(&trace.pooled, &grad, lambda).unwrap();
    model.backward_features(&trace, Some(&g), None).unwrap();
    model
        .parameters()
        .iter()
        .filter(|p| p.name().starts_with("block"))
        .flat_map(|p| p.grad.data().to_vec())
        .collect()
}

#[test]
fn reversal_sign_reaches_the_features() {
    let pos = domain_feature_grads(1.0);
    let neg = domain_feature_grads(-1.0);
    assert!(pos.iter().any(|v| *v != 0.0));
    for (a, b) in pos.iter().zip(&neg) {
        assert!((a + b).abs() < 1e-9);
    }
    assert!(domain_feature_grads(0.0).iter().all(|v| *v == 0.0));
}

#[test]
fn zero_network_gives_uniform_logits() {
    let (mut model, x) = toy();
    for p in model.parameters_mut() {
        p.value.fill(0.0);
    }
    let logits = model.forward_classify(&x, DomainKey(1)).unwrap();
    assert!(logits.data().iter().all(|v| *v == logits.data()[0]));
    let probs = softmax(&logits).unwrap();
    assert!(probs.data().iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn identical_windows_give_identical_rows() {
    let (model, x) = toy();
    let one = &x.data()[..48];
    let batch = Tensor::from_vec(&[5, 3, 16], one.repeat(5)).unwrap();
    let logits = model.forward_classify(&batch, DomainKey(1)).unwrap();
    for row in logits.data().chunks(3) {
        assert_eq!(row, &logits.data()[..3]);
    }
    assert!(model
        .forward_classify(&Tensor::zeros(&[1, 2, 16]), DomainKey(1))
        .is_err());
}

#[test]
fn prediction_tie_rule() {
    let mut logits = vec![0.0; 11];
    logits[10] = 5.0;
    assert_eq!(argmax(&logits), 10);
    assert_eq!(argmax(&[0.0; 11]), 0);
}

#[test]
fn adam_examples() {
    let mut p = Parameter::new("w", t(&[1], &[0.0]));
    p.grad = t(&[1], &[1.0]);
    let mut adam = AdamState::new(AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    });
    adam.step(&mut [&mut p]);
    assert!((p.value.data()[0] + 0.1).abs() < 1e-6);

    let mut frozen = Parameter::new("f", t(&[2], &[1.0, 2.0]));
    frozen.trainable = false;
    frozen.grad = t(&[2], &[3.0, 4.0]);
    let mut still = Parameter::new("z", t(&[2], &[1.0, 2.0]));
    adam.step(&mut [&mut frozen, &mut still]);
    assert_eq!(frozen.value.data(), &[1.0, 2.0]);
    assert_eq!(still.value.data(), &[1.0, 2.0]);
}
