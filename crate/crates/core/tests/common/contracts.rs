//! Training-contract checks shared by the unit-level suites and the
//! acceptance run. Each check panics with a description on violation.

use std::collections::BTreeMap;

use semgkit::kernel::{BnStats, DomainKey};
use semgkit::model::{build_tadann, Network, TcnModel};
use semgkit::training::*;

use super::fixtures::{tiny_experiment, tiny_plan};

pub type Banks = BTreeMap<(usize, DomainKey), BnStats<f64>>;

pub fn banks(model: &TcnModel<f64>) -> Banks {
    let mut out = BTreeMap::new();
    for (i, b) in model.blocks.iter().enumerate() {
        for (k, s) in b.banks.iter() {
            out.insert((i, k), s.clone());
        }
    }
    out
}

/// Checks after every ADANN step that only the source session's bank moved.
pub struct BankWatch {
    last: Banks,
    pub steps: usize,
    pub sources: Vec<DomainKey>,
}

impl BankWatch {
    pub fn new(model: &TcnModel<f64>) -> Self {
        Self {
            last: banks(model),
            steps: 0,
            sources: Vec::new(),
        }
    }
}

impl TrainObserver<f64> for BankWatch {
    fn on_adann_step(&mut self, step: &AdannStep, model: &TcnModel<f64>) {
        let now = banks(model);
        for ((block, key), stats) in &now {
            if *key != step.source {
                assert_eq!(
                    Some(stats),
                    self.last.get(&(*block, *key)),
                    "step {}: bank {key:?} of block {block} changed while training on {:?}",
                    step.step,
                    step.source
                );
            }
        }
        assert_ne!(step.source, step.target);
        self.sources.push(step.source);
        self.last = now;
        self.steps += 1;
    }
}

pub struct CoefficientWatch {
    pub steps: usize,
}

impl TrainObserver<f64> for CoefficientWatch {
    fn on_step(&mut self, _step: u64, coefficients: &[f64]) {
        for &c in coefficients {
            assert!((0.0..=2.0).contains(&c), "coefficient {c} left [0, 2]");
        }
        self.steps += 1;
    }
}

/// Full ADANN pre-training over three sessions under [`BankWatch`].
/// Returns the number of steps watched.
pub fn adann_bank_isolation(seed: u64) -> usize {
    let plan = tiny_plan(seed);
    let spec = tiny_experiment(seed);
    let mut model = TcnModel::<f64>::new(spec.model.clone(), seed + 4).unwrap();
    let domains: Vec<DomainSet<'_>> = plan
        .sessions
        .iter()
        .map(|s| DomainSet {
            key: s.key(),
            windows: &s.train,
        })
        .collect();
    for d in &domains {
        model.ensure_domain(d.key);
    }
    let mut watch = BankWatch::new(&model);
    adann_pretrain(&mut model, &domains, &spec.train, &spec.adann, &mut watch).unwrap();
    assert!(watch.steps > 10, "only {} ADANN steps", watch.steps);
    // every session served as the source at some point
    for d in &domains {
        assert!(watch.sources.contains(&d.key), "{:?} never trained", d.key);
    }
    watch.steps
}

/// ADANN pre-training on sessions 1-2, fusion, then target training on
/// session 3 with the coefficients started on the clamp bounds. Returns the
/// number of frozen tensors compared bit for bit.
pub fn tadann_freeze_and_clamp(seed: u64) -> usize {
    let plan = tiny_plan(100 + seed);
    let mut spec = tiny_experiment(seed);
    // a large step size pushes the coefficients against the clamp
    spec.train.lr = 0.05;
    let pre = &plan.sessions[..2];
    let mut source = TcnModel::<f64>::new(spec.model.clone(), seed).unwrap();
    let domains: Vec<DomainSet<'_>> = pre
        .iter()
        .map(|s| DomainSet {
            key: s.key(),
            windows: &s.train,
        })
        .collect();
    adann_pretrain(&mut source, &domains, &spec.train, &spec.adann, &mut NoObserver).unwrap();
    let snapshot: Vec<(String, Vec<f64>)> = source
        .parameters()
        .iter()
        .map(|p| (p.name().to_string(), p.value.data().to_vec()))
        .collect();
    let pre_banks = banks(&source);

    let calib = &plan.sessions[2];
    let mut tadann = build_tadann(source, &spec.model, calib.key(), seed + 50).unwrap();
    // start on the bounds so any outward step has to be projected back
    assert_eq!(tadann.coefficients.value.len(), spec.model.num_blocks() + 1);
    for (i, c) in tadann.coefficients.value.data_mut().iter_mut().enumerate() {
        *c = if i % 2 == 0 { 0.0 } else { 2.0 };
    }
    let mut watch = CoefficientWatch { steps: 0 };
    train_tadann(&mut tadann, &calib.train, &spec.train, &mut watch).unwrap();
    assert!(watch.steps > 0);

    let trained = tadann.source.parameters();
    assert_eq!(trained.len(), snapshot.len());
    let mut frozen = 0;
    for (p, (name, before)) in trained.iter().zip(&snapshot) {
        assert!(p.name().ends_with(name.as_str()));
        if !name.contains(".bn.") {
            assert!(!p.trainable, "{name} is trainable");
            // bit-identical, not just close
            let same = p
                .value
                .data()
                .iter()
                .zip(before)
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "seed {seed}: {name} moved");
            frozen += 1;
        }
    }
    assert!(frozen > 0);
    for c in tadann.fusion_coefficients() {
        assert!((0.0..=2.0).contains(&c), "final coefficient {c}");
    }
    // the pre-training banks survive calibration untouched
    let after = banks(&tadann.source);
    for (k, v) in &pre_banks {
        assert_eq!(after.get(k), Some(v), "pre-training bank {k:?} changed");
    }
    frozen
}
