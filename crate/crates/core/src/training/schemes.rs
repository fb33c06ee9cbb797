//! The four long-term calibration protocols.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::adann::{adann_pretrain, DomainSet};
use super::spec::{AdannSpec, History, TargetInit, TrainSpec};
use super::supervised::{predict_set, train_supervised, TrainObserver};
use crate::datasets::{WindowOrigin, WindowSet};
use crate::kernel::{Checkpoint, DomainKey, Real};
use crate::model::{build_tadann, TadannModel, TcnConfig, TcnModel};
use crate::rng::{derive_seed, tag};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationScheme {
    NoCalibration,
    Recalibration,
    DelayedCalibration,
    Tadann,
}

impl CalibrationScheme {
    pub const ALL: [CalibrationScheme; 4] = [
        CalibrationScheme::NoCalibration,
        CalibrationScheme::Recalibration,
        CalibrationScheme::DelayedCalibration,
        CalibrationScheme::Tadann,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CalibrationScheme::NoCalibration => "no_calibration",
            CalibrationScheme::Recalibration => "recalibration",
            CalibrationScheme::DelayedCalibration => "delayed_calibration",
            CalibrationScheme::Tadann => "tadann",
        }
    }

    /// First 1-based session position the scheme is defined for.
    pub fn first_defined_session(self) -> usize {
        match self {
            CalibrationScheme::NoCalibration | CalibrationScheme::Recalibration => 1,
            CalibrationScheme::Tadann => 2,
            CalibrationScheme::DelayedCalibration => 3,
        }
    }

    /// Errors when a plan with `sessions` sessions cannot exercise the scheme.
    pub fn check_applicable(self, sessions: usize) -> Result<()> {
        if sessions < self.first_defined_session() {
            return Err(Error::Insufficient(format!(
                "{} needs at least {} sessions, plan has {sessions}",
                self.name(),
                self.first_defined_session()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for CalibrationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CalibrationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config("scheme", format!("unknown scheme {s:?}")))
    }
}

/// Windows of one session split into the protocol's roles.
#[derive(Debug, Clone)]
pub struct PlannedSession {
    pub session: u32,
    pub train: WindowSet,
    pub offline_test: WindowSet,
    pub evaluation: WindowSet,
}

impl PlannedSession {
    pub fn key(&self) -> DomainKey {
        DomainKey(self.session)
    }
}

/// A participant's sessions in recording order.
#[derive(Debug, Clone)]
pub struct SessionPlan {
    pub participant: u32,
    pub sessions: Vec<PlannedSession>,
}

pub const DEFAULT_TRAIN_CYCLES: [u32; 2] = [1, 3];
pub const DEFAULT_TEST_CYCLE: u32 = 4;
/// The maximal-intensity cycle, never used for training or offline testing.
pub const MAX_INTENSITY_CYCLE: u32 = 2;

impl SessionPlan {
    /// Splits preprocessed sessions into training cycles, the offline test
    /// cycle and evaluation-run windows.
    pub fn new(participant: u32, sets: &[WindowSet], train_cycles: &[u32], test_cycle: u32) -> Result<Self> {
        if train_cycles.contains(&MAX_INTENSITY_CYCLE) || test_cycle == MAX_INTENSITY_CYCLE {
            return Err(Error::config(
                "cycles",
                "cycle 2 is the maximal-intensity reference and cannot be used",
            ));
        }
        if train_cycles.is_empty() || train_cycles.contains(&test_cycle) {
            return Err(Error::config(
                "cycles",
                "training cycles must be non-empty and exclude the test cycle",
            ));
        }
        let mut sessions = Vec::with_capacity(sets.len());
        for set in sets {
            let session = set
                .meta
                .first()
                .map(|m| m.session)
                .ok_or_else(|| Error::Insufficient("session without windows".into()))?;
            if set
                .meta
                .iter()
                .any(|m| m.session != session || m.participant != participant)
            {
                return Err(Error::Data {
                    path: format!("participant {participant}").into(),
                    reason: "window set mixes sessions or participants".into(),
                });
            }
            let in_cycles =
                |m: &crate::datasets::WindowMeta, ids: &[u32]| m.origin.cycle().is_some_and(|c| ids.contains(&c));
            sessions.push(PlannedSession {
                session,
                train: set.filter(|m| in_cycles(m, train_cycles)),
                offline_test: set.filter(|m| m.origin.cycle() == Some(test_cycle)),
                evaluation: set.filter(|m| matches!(m.origin, WindowOrigin::Evaluation { .. })),
            });
        }
        if sessions.windows(2).any(|w| w[1].session <= w[0].session) {
            return Err(Error::config("sessions", "sessions must be strictly increasing"));
        }
        Ok(Self { participant, sessions })
    }
}

/// Everything the schemes need besides data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentSpec {
    pub model: TcnConfig,
    pub train: TrainSpec,
    pub adann: AdannSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Score {
    pub correct: usize,
    pub total: usize,
}

impl Score {
    pub fn from_predictions(pred: &[usize], labels: &[usize]) -> Option<Self> {
        if labels.is_empty() {
            return None;
        }
        let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Some(Self {
            correct,
            total: labels.len(),
        })
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// A trained network plus the bank it evaluates with.
// Few of these exist at a time, so the size gap is not worth a box.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel<T> {
    Tcn { model: TcnModel<T>, key: DomainKey },
    Tadann(TadannModel<T>),
}

impl<T: Real> TrainedModel<T> {
    pub fn key(&self) -> DomainKey {
        match self {
            TrainedModel::Tcn { key, .. } => *key,
            TrainedModel::Tadann(m) => m.calibration,
        }
    }

    pub fn predict(&self, set: &WindowSet) -> Result<Vec<usize>> {
        if set.is_empty() {
            return Ok(Vec::new());
        }
        match self {
            TrainedModel::Tcn { model, key } => predict_set(model, set, *key),
            TrainedModel::Tadann(m) => predict_set(m, set, m.calibration),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        match self {
            TrainedModel::Tcn { model, key } => {
                ck.set_meta("model.kind", "tcn");
                ck.set_meta("model.key", key.0);
                model.to_checkpoint(&mut ck);
            }
            TrainedModel::Tadann(m) => {
                ck.set_meta("model.kind", "tadann");
                ck.set_meta("model.key", m.calibration.0);
                m.to_checkpoint(&mut ck);
            }
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        match ck.meta("model.kind")? {
            "tcn" => Ok(TrainedModel::Tcn {
                model: TcnModel::from_checkpoint(ck, "")?,
                key: DomainKey(ck.meta_parse("model.key")?),
            }),
            "tadann" => Ok(TrainedModel::Tadann(TadannModel::from_checkpoint(ck)?)),
            other => Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub session: u32,
    /// Why the scheme does not apply to this session.
    pub skipped: Option<String>,
    pub offline: Option<Score>,
    pub evaluation: Option<Score>,
    pub offline_predictions: Vec<usize>,
    pub evaluation_predictions: Vec<usize>,
    /// Recalibration only: offline score of the inherited weights before
    /// fine-tuning on this session.
    pub initial_offline: Option<Score>,
    pub history: Option<History>,
}

impl SessionOutcome {
    fn skipped(session: u32, reason: String) -> Self {
        Self {
            session,
            skipped: Some(reason),
            offline: None,
            evaluation: None,
            offline_predictions: Vec::new(),
            evaluation_predictions: Vec::new(),
            initial_offline: None,
            history: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOutcome<T> {
    pub scheme: CalibrationScheme,
    pub participant: u32,
    pub sessions: Vec<SessionOutcome>,
    /// The model that produced each evaluated session's predictions.
    pub models: BTreeMap<u32, TrainedModel<T>>,
}

fn evaluate<T: Real>(model: &TrainedModel<T>, ps: &PlannedSession, history: Option<History>) -> Result<SessionOutcome> {
    let offline_predictions = model.predict(&ps.offline_test)?;
    let evaluation_predictions = model.predict(&ps.evaluation)?;
    Ok(SessionOutcome {
        session: ps.session,
        skipped: None,
        offline: Score::from_predictions(&offline_predictions, &ps.offline_test.labels()),
        evaluation: Score::from_predictions(&evaluation_predictions, &ps.evaluation.labels()),
        offline_predictions,
        evaluation_predictions,
        initial_offline: None,
        history,
    })
}

fn fit_spec(spec: &ExperimentSpec, participant: u32, session: u32) -> TrainSpec {
    TrainSpec {
        seed: derive_seed(spec.train.seed, &[tag("fit"), participant as u64, session as u64]),
        ..spec.train
    }
}

fn init_seed(spec: &ExperimentSpec, what: &str, participant: u32, session: u32) -> u64 {
    derive_seed(spec.train.seed, &[tag(what), participant as u64, session as u64])
}

/// Runs `schemes` on one participant's plan. Schemes share work where the
/// protocol makes them identical (the first-session model and the
/// recalibration chain), so the result equals running each on its own.
pub fn run_schemes<T: Real>(
    plan: &SessionPlan,
    schemes: &[CalibrationScheme],
    spec: &ExperimentSpec,
    observer: &mut dyn TrainObserver<T>,
) -> Result<Vec<SchemeOutcome<T>>> {
    let n = plan.sessions.len();
    for s in schemes {
        s.check_applicable(n)?;
    }
    spec.model.validate()?;
    let p = plan.participant;
    let wants = |s: CalibrationScheme| schemes.contains(&s);
    let need_chain = wants(CalibrationScheme::NoCalibration)
        || wants(CalibrationScheme::Recalibration)
        || wants(CalibrationScheme::DelayedCalibration);

    // recalibration chain: model k is fine-tuned through session k
    let mut chain: Vec<(TcnModel<T>, History)> = Vec::new();
    if need_chain {
        let chain_len = if wants(CalibrationScheme::Recalibration) {
            n
        } else if wants(CalibrationScheme::DelayedCalibration) {
            n - 1
        } else {
            1
        };
        let first = &plan.sessions[0];
        let mut model = TcnModel::new(spec.model.clone(), init_seed(spec, "model-init", p, first.session))?;
        let history = train_supervised(
            &mut model,
            &first.train,
            first.key(),
            &fit_spec(spec, p, first.session),
            observer,
        )?;
        chain.push((model, history));
        for k in 1..chain_len {
            let ps = &plan.sessions[k];
            let mut model = chain[k - 1].0.clone();
            model.fork_domain(plan.sessions[k - 1].key(), ps.key())?;
            let history = train_supervised(
                &mut model,
                &ps.train,
                ps.key(),
                &fit_spec(spec, p, ps.session),
                observer,
            )?;
            chain.push((model, history));
        }
    }

    let mut out = Vec::new();
    for &scheme in schemes {
        let mut sessions = Vec::with_capacity(n);
        let mut models = BTreeMap::new();
        for (k, ps) in plan.sessions.iter().enumerate() {
            let position = k + 1;
            if position < scheme.first_defined_session() {
                sessions.push(SessionOutcome::skipped(
                    ps.session,
                    format!(
                        "{scheme} is undefined before session position {}",
                        scheme.first_defined_session()
                    ),
                ));
                continue;
            }
            let (trained, history) = match scheme {
                CalibrationScheme::NoCalibration => (
                    TrainedModel::Tcn {
                        model: chain[0].0.clone(),
                        key: plan.sessions[0].key(),
                    },
                    (k == 0).then(|| chain[0].1.clone()),
                ),
                CalibrationScheme::Recalibration => (
                    TrainedModel::Tcn {
                        model: chain[k].0.clone(),
                        key: ps.key(),
                    },
                    Some(chain[k].1.clone()),
                ),
                CalibrationScheme::DelayedCalibration => (
                    TrainedModel::Tcn {
                        model: chain[k - 1].0.clone(),
                        key: plan.sessions[k - 1].key(),
                    },
                    None,
                ),
                CalibrationScheme::Tadann => {
                    let (m, h) = train_tadann_at(plan, k, spec, observer)?;
                    (TrainedModel::Tadann(m), Some(h))
                }
            };
            let mut outcome = evaluate(&trained, ps, history)?;
            if scheme == CalibrationScheme::Recalibration && k > 0 {
                let inherited = TrainedModel::Tcn {
                    model: chain[k - 1].0.clone(),
                    key: plan.sessions[k - 1].key(),
                };
                outcome.initial_offline =
                    Score::from_predictions(&inherited.predict(&ps.offline_test)?, &ps.offline_test.labels());
            }
            sessions.push(outcome);
            models.insert(ps.session, trained);
        }
        out.push(SchemeOutcome {
            scheme,
            participant: p,
            sessions,
            models,
        });
    }
    Ok(out)
}

/// Pre-trains a source network on sessions before position `k` (adversarially
/// when there are at least two, supervised otherwise), fuses it into a target
/// network started per [`AdannSpec::target_init`] and trains the pair on
/// session `k`.
pub fn train_tadann_at<T: Real>(
    plan: &SessionPlan,
    k: usize,
    spec: &ExperimentSpec,
    observer: &mut dyn TrainObserver<T>,
) -> Result<(TadannModel<T>, History)> {
    if k == 0 {
        return Err(Error::Insufficient("TADANN needs a pre-calibration session".into()));
    }
    let p = plan.participant;
    let calib = &plan.sessions[k];
    let mut source = TcnModel::new(spec.model.clone(), init_seed(spec, "adann-init", p, calib.session))?;
    let pre = &plan.sessions[..k];
    let pre_spec = TrainSpec {
        seed: init_seed(spec, "adann-fit", p, calib.session),
        ..spec.train
    };
    if pre.len() >= 2 {
        let domains: Vec<DomainSet<'_>> = pre
            .iter()
            .map(|s| DomainSet {
                key: s.key(),
                windows: &s.train,
            })
            .collect();
        adann_pretrain(&mut source, &domains, &pre_spec, &spec.adann, observer)?;
    } else {
        train_supervised(&mut source, &pre[0].train, pre[0].key(), &pre_spec, observer)?;
    }
    let mut tadann = build_tadann(
        source,
        &spec.model,
        calib.key(),
        init_seed(spec, "target-init", p, calib.session),
    )?;
    if spec.adann.target_init == TargetInit::Source {
        tadann.copy_source_into_target();
    }
    let history = train_tadann(&mut tadann, &calib.train, &fit_spec(spec, p, calib.session), observer)?;
    Ok((tadann, history))
}

/// Trains the target network, the source's BN affine parameters and the
/// fusion coefficients on the calibration session.
pub fn train_tadann<T: Real>(
    tadann: &mut TadannModel<T>,
    data: &WindowSet,
    spec: &TrainSpec,
    observer: &mut dyn TrainObserver<T>,
) -> Result<History> {
    let key = tadann.calibration;
    train_supervised(tadann, data, key, spec, observer)
}

/// Runs one scheme on one participant.
pub fn run_calibration_scheme<T: Real>(
    plan: &SessionPlan,
    scheme: CalibrationScheme,
    spec: &ExperimentSpec,
    observer: &mut dyn TrainObserver<T>,
) -> Result<SchemeOutcome<T>> {
    Ok(run_schemes(plan, &[scheme], spec, observer)?.remove(0))
}
