mod common;

use std::fs;

use common::fixtures::{tiny_sessions, tiny_spec};
use semgkit::datasets::*;
use semgkit::signal::{design_bandpass, filter_causal, mav, FilterSpec, RawSignal};
use semgkit::training::*;

#[test]
fn synthesis_is_a_pure_function_of_the_spec() {
    let a = tiny_sessions(3);
    let b = tiny_sessions(3);
    assert_eq!(a, b);
    assert_eq!(dataset_checksum(&a).unwrap(), dataset_checksum(&b).unwrap());
    assert_ne!(
        dataset_checksum(&a).unwrap(),
        dataset_checksum(&tiny_sessions(4)).unwrap()
    );
    assert_eq!(a.len(), 3);
    for s in &a {
        assert_eq!(s.cycles.len(), 4);
        assert!(s.cycles.iter().all(|c| c.spans.len() == 11));
    }
}

#[test]
fn canonical_round_trip() {
    let sessions = tiny_sessions(5);
    let dir = tempfile::tempdir().unwrap();
    let written = write_canonical(dir.path(), &sessions).unwrap();
    let loaded = load_canonical(dir.path()).unwrap();
    assert_eq!(loaded.sessions, sessions);
    assert_eq!(loaded.checksum, written);
    assert_eq!(dataset_checksum(&sessions).unwrap(), written);
}

fn session_dir(root: &std::path::Path) -> std::path::PathBuf {
    root.join("participant_01").join("session_01")
}

#[test]
fn canonical_errors_name_the_file() {
    let sessions = tiny_sessions(6);

    let dir = tempfile::tempdir().unwrap();
    write_canonical(dir.path(), &sessions[..1]).unwrap();
    fs::remove_file(dir.path().join(MANIFEST_NAME)).unwrap();
    let meta = session_dir(dir.path()).join("cycle_1.meta");
    let text = fs::read_to_string(&meta)
        .unwrap()
        .replace("gestures = 11", "gestures = 12");
    fs::write(&meta, text).unwrap();
    let err = load_canonical(dir.path()).unwrap_err().to_string();
    assert!(err.contains("gesture count"), "{err}");
    assert!(err.contains("cycle_1.meta"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    write_canonical(dir.path(), &sessions[..1]).unwrap();
    fs::remove_file(dir.path().join(MANIFEST_NAME)).unwrap();
    let signal = session_dir(dir.path()).join("cycle_3.i16");
    let bytes = fs::read(&signal).unwrap();
    fs::write(&signal, &bytes[..bytes.len() - 7]).unwrap();
    let err = load_canonical(dir.path()).unwrap_err().to_string();
    assert!(err.contains("byte offset"), "{err}");
    assert!(err.contains("cycle_3.i16"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    write_canonical(dir.path(), &sessions[..1]).unwrap();
    fs::remove_file(dir.path().join(MANIFEST_NAME)).unwrap();
    fs::remove_file(session_dir(dir.path()).join("cycle_4.meta")).unwrap();
    let err = load_canonical(dir.path()).unwrap_err().to_string();
    assert!(err.contains("cycle_4.meta"), "{err}");

    // with a manifest, tampering is caught before parsing
    let dir = tempfile::tempdir().unwrap();
    write_canonical(dir.path(), &sessions[..1]).unwrap();
    let signal = session_dir(dir.path()).join("cycle_2.i16");
    let mut bytes = fs::read(&signal).unwrap();
    bytes[10] ^= 1;
    fs::write(&signal, bytes).unwrap();
    assert!(load_canonical(dir.path()).is_err());
}

#[test]
fn degenerate_templates_are_rejected() {
    let spec = SynthSpec {
        templates: Some(vec![vec![0.0; 10]; 11]),
        ..tiny_spec(1)
    };
    assert!(synthesize(&spec).is_err());
    let spec = SynthSpec {
        num_sessions: 0,
        ..tiny_spec(1)
    };
    assert!(synthesize(&spec).is_err());
}

/// Mean absolute filtered signal per channel over one gesture's cycle span.
fn gesture_profile(session: &SessionDataset, cycle: u32, gesture: usize) -> Vec<f64> {
    let coeffs = design_bandpass(&FilterSpec::default()).unwrap();
    let c = session.cycle(cycle).unwrap();
    let span = c.spans.iter().find(|s| s.gesture == gesture).unwrap();
    let filtered = filter_causal(&c.signal, &coeffs).unwrap();
    // skip the onset so the filter and the transition have settled
    let skip = span.len / 4;
    mav(&filtered.slice(span.start + skip, span.len - skip).unwrap()).unwrap()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn electrode_shift_rotates_the_mav_profile() {
    let spec = SynthSpec {
        shift_per_session: 2.0,
        drift_per_day: 0.0,
        fixed_intensity: Some(0.5),
        gesture_seconds: 2.0,
        ..tiny_spec(8)
    };
    let sessions = synthesize_participant(&spec, 1).unwrap();
    for gesture in 1..11 {
        let first = gesture_profile(&sessions[0], 1, gesture);
        let second = gesture_profile(&sessions[1], 1, gesture);
        // integer rotation by two electrodes: channel c now sees c - 2
        let rotated: Vec<f64> = (0..10).map(|c| first[(c + 8) % 10]).collect();
        let r = correlation(&rotated, &second);
        assert!(r > 0.99, "gesture {gesture}: r = {r}");
    }
}

#[test]
fn doubling_intensity_doubles_window_mav() {
    let quiet = SynthSpec {
        fixed_intensity: Some(0.3),
        noise_level: 0.0,
        noise_growth_per_day: 0.0,
        gesture_seconds: 2.0,
        ..tiny_spec(2)
    };
    let loud = SynthSpec {
        fixed_intensity: Some(0.6),
        ..quiet.clone()
    };
    let (a, b) = (
        synthesize_participant(&quiet, 1).unwrap(),
        synthesize_participant(&loud, 1).unwrap(),
    );
    for gesture in 1..11 {
        let (pa, pb) = (gesture_profile(&a[0], 1, gesture), gesture_profile(&b[0], 1, gesture));
        let (ma, mb) = (pa.iter().sum::<f64>(), pb.iter().sum::<f64>());
        assert!((mb / ma - 2.0).abs() < 0.02, "gesture {gesture}: ratio {}", mb / ma);
    }
}

#[test]
fn intensity_ratio_examples() {
    let reference = IntensityReference {
        per_gesture: vec![1.0, 2.0, 4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
    };
    let window = |level: f64| RawSignal::new(2, 1000.0, vec![level, -level, level, -level]).unwrap();
    assert_eq!(intensity_ratio(&window(4.0), &reference, 2).unwrap(), 1.0);
    assert_eq!(intensity_ratio(&window(1.0), &reference, 1).unwrap(), 0.5);
    let zero = IntensityReference {
        per_gesture: vec![0.0; 11],
    };
    assert!(intensity_ratio(&window(1.0), &zero, 3).is_err());
    assert_eq!(label_intensity_level(0.10), 1);
    assert_eq!(label_intensity_level(0.30), 2);
    assert_eq!(label_intensity_level(0.90), 3);
}

#[test]
#[allow(clippy::approx_constant)]
fn natural_intensity_averages_near_the_reported_ratio() {
    let spec = SynthSpec {
        gesture_seconds: 2.0,
        cycles: 30,
        num_sessions: 1,
        ..tiny_spec(12)
    };
    let sessions = synthesize_participant(&spec, 1).unwrap();
    let pre = Preprocessor::new(PreprocessSpec::default()).unwrap();
    let sets = pre.participant(&sessions).unwrap();
    let ratios: Vec<f64> = sets[0]
        .meta
        .iter()
        .filter(|m| m.label != 0 && !matches!(m.origin, WindowOrigin::Cycle(2)) && m.origin.cycle().is_some())
        .filter_map(|m| m.intensity_ratio)
        .collect();
    assert!(ratios.len() > 500);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    // the noise floor lifts quiet windows a little above their commanded level
    assert!(
        (mean - SynthSpec::default().intensity_mean).abs() < 0.03,
        "mean ratio {mean}"
    );
}

#[test]
fn identical_sessions_classify_alike() {
    let mut gaps = Vec::new();
    for seed in 0..5 {
        let spec = SynthSpec {
            shift_per_session: 0.0,
            drift_per_day: 0.0,
            noise_growth_per_day: 0.0,
            fixed_intensity: Some(0.5),
            num_sessions: 2,
            gesture_seconds: 2.0,
            ..tiny_spec(20 + seed)
        };
        let sessions = synthesize_participant(&spec, 1).unwrap();
        let pre = Preprocessor::new(PreprocessSpec::default()).unwrap();
        let sets = pre.participant(&sessions).unwrap();
        let plan = SessionPlan::new(1, &sets, &DEFAULT_TRAIN_CYCLES, DEFAULT_TEST_CYCLE).unwrap();
        let mut ex = common::fixtures::tiny_experiment(seed);
        ex.model = semgkit::model::TcnConfig::with_width(8);
        ex.train.max_epochs = 15;
        let out = run_calibration_scheme::<f32>(&plan, CalibrationScheme::NoCalibration, &ex, &mut NoObserver).unwrap();
        let s1 = out.sessions[0].offline.unwrap().accuracy();
        let s2 = out.sessions[1].offline.unwrap().accuracy();
        gaps.push((s1, s2));
    }
    for (s1, s2) in &gaps {
        assert!((s1 - s2).abs() <= 0.02, "{gaps:?}");
    }
}
