//! Canonical on-disk layout:
//!
//! ```text
//! <root>/MANIFEST.sha256
//! <root>/participant_NN/session_NN/session.meta
//! <root>/participant_NN/session_NN/cycle_<id>.{i16,meta}
//! <root>/participant_NN/session_NN/eval_<id>.{i16,meta,angles}
//! ```
//!
//! Signals are little-endian `i16`, interleaved by sample (all channels of
//! sample 0, then sample 1, ...). Physical value = `i16 * lsb`. Sidecars are
//! `key = value` lines; repeated keys (`span`, `trial`) keep their order.
//! `.angles` holds one `pitch yaw` line per orientation frame.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::types::{Cycle, EvaluationRun, GestureSpan, SessionDataset, Trial};
use crate::signal::RawSignal;
use crate::{Error, Result, NUM_GESTURES};

pub const MANIFEST_NAME: &str = "MANIFEST.sha256";
const FORMAT_TAG: &str = "semgkit-canonical 1";

fn data_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::data(path, reason)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            data_err(path, "file is missing")
        } else {
            Error::io(path, e)
        }
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parsed `key = value` sidecar.
struct Sidecar {
    path: PathBuf,
    pairs: Vec<(String, String)>,
}

impl Sidecar {
    fn load(path: &Path) -> Result<Self> {
        let bytes = read(path)?;
        let text = String::from_utf8(bytes).map_err(|_| data_err(path, "sidecar is not UTF-8"))?;
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| data_err(path, format!("line {}: expected `key = value`", n + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            pairs,
        })
    }

    fn opt(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.opt(key)
            .ok_or_else(|| data_err(&self.path, format!("missing key `{key}`")))
    }

    fn parse<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| data_err(&self.path, format!("cannot parse `{key}` value {v:?}")))
    }

    fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> {
        self.pairs
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn fields<V: std::str::FromStr>(&self, key: &str, value: &str, n: usize) -> Result<Vec<V>> {
        let parts: Vec<&str> = value.split_whitespace().collect();
        if parts.len() != n {
            return Err(data_err(&self.path, format!("`{key}` needs {n} fields, got {value:?}")));
        }
        parts
            .iter()
            .map(|p| {
                p.parse()
                    .map_err(|_| data_err(&self.path, format!("cannot parse `{key}` field {p:?}")))
            })
            .collect()
    }
}

fn read_signal(path: &Path, channels: usize, samples: usize, lsb: f64, sample_rate: f64) -> Result<RawSignal> {
    let bytes = read(path)?;
    let expected = channels * samples * 2;
    if bytes.len() < expected {
        return Err(data_err(
            path,
            format!(
                "truncated signal: expected {expected} bytes, data ends at byte offset {}",
                bytes.len() - bytes.len() % 2
            ),
        ));
    }
    if bytes.len() > expected {
        return Err(data_err(
            path,
            format!("shape mismatch: unexpected data after byte offset {expected}"),
        ));
    }
    let mut data = vec![0.0; expected / 2];
    for (i, pair) in bytes.chunks_exact(2).enumerate() {
        let (t, c) = (i / channels, i % channels);
        data[c * samples + t] = i16::from_le_bytes([pair[0], pair[1]]) as f64 * lsb;
    }
    RawSignal::new(channels, sample_rate, data).map_err(|e| data_err(path, e.to_string()))
}

fn encode_signal(signal: &RawSignal, lsb: f64, path: &Path) -> Result<Vec<u8>> {
    let (channels, samples) = (signal.channels(), signal.len());
    let mut out = Vec::with_capacity(channels * samples * 2);
    for t in 0..samples {
        for c in 0..channels {
            let q = (signal.channel(c)[t] / lsb).round();
            if !(i16::MIN as f64..=i16::MAX as f64).contains(&q) {
                return Err(data_err(path, format!("sample {t} channel {c} exceeds the i16 range")));
            }
            out.extend_from_slice(&(q as i16).to_le_bytes());
        }
    }
    Ok(out)
}

fn session_dir(root: &Path, participant: u32, session: u32) -> PathBuf {
    root.join(format!("participant_{participant:02}"))
        .join(format!("session_{session:02}"))
}

/// Files of one session as (name, bytes), in write order.
fn encode_session(s: &SessionDataset, dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    let meta = format!(
        "format = {FORMAT_TAG}\nparticipant = {}\nsession = {}\nday_offset = {}\nlsb = {}\ncycles = {}\nevaluation_runs = {}\n",
        s.participant,
        s.session,
        s.day_offset,
        s.lsb,
        s.cycles.len(),
        s.evaluation_runs.len()
    );
    files.push(("session.meta".to_string(), meta.into_bytes()));
    for (i, c) in s.cycles.iter().enumerate() {
        if c.id as usize != i + 1 {
            return Err(data_err(
                dir,
                format!("cycle ids must run 1..n, found {} at {}", c.id, i + 1),
            ));
        }
        let mut m = format!(
            "sample_rate = {}\nchannels = {}\nsamples = {}\ngestures = {}\n",
            c.signal.sample_rate(),
            c.signal.channels(),
            c.signal.len(),
            c.spans.len()
        );
        for sp in &c.spans {
            m.push_str(&format!("span = {} {} {}\n", sp.gesture, sp.start, sp.len));
        }
        let name = format!("cycle_{}", c.id);
        files.push((
            format!("{name}.i16"),
            encode_signal(&c.signal, s.lsb, &dir.join(&name))?,
        ));
        files.push((format!("{name}.meta"), m.into_bytes()));
    }
    for (i, r) in s.evaluation_runs.iter().enumerate() {
        if r.id as usize != i + 1 {
            return Err(data_err(
                dir,
                format!("evaluation run ids must run 1..n, found {}", r.id),
            ));
        }
        let mut m = format!(
            "sample_rate = {}\nchannels = {}\nsamples = {}\nframe_rate = {}\nframes = {}\n",
            r.signal.sample_rate(),
            r.signal.channels(),
            r.signal.len(),
            r.frame_rate,
            r.orientation.len()
        );
        if let Some(score) = r.score {
            m.push_str(&format!("score = {score}\n"));
        }
        m.push_str(&format!("trials = {}\n", r.trials.len()));
        for t in &r.trials {
            m.push_str(&format!(
                "trial = {} {} {} {} {} {}\n",
                t.gesture, t.level, t.pitch, t.yaw, t.start, t.len
            ));
        }
        let angles: String = r.orientation.iter().map(|(p, y)| format!("{p} {y}\n")).collect();
        let name = format!("eval_{}", r.id);
        files.push((
            format!("{name}.i16"),
            encode_signal(&r.signal, s.lsb, &dir.join(&name))?,
        ));
        files.push((format!("{name}.meta"), m.into_bytes()));
        files.push((format!("{name}.angles"), angles.into_bytes()));
    }
    Ok(files)
}

fn session_checksum(files: &mut [(String, Vec<u8>)]) -> String {
    files.sort_by(|a, b| a.0.cmp(&b.0));
    let mut h = Sha256::new();
    for (name, bytes) in files.iter() {
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

/// Computes the checksum a session would have on disk without writing it.
pub fn checksum_session(s: &SessionDataset) -> Result<String> {
    let mut files = encode_session(s, Path::new("."))?;
    Ok(session_checksum(&mut files))
}

/// Encodes every session, handing each file to `sink`, and returns the
/// manifest text.
fn build_manifest(
    root: &Path,
    sessions: &[SessionDataset],
    mut sink: impl FnMut(&Path, &[u8]) -> Result<()>,
) -> Result<String> {
    super::types::check_session_order(sessions)?;
    let mut manifest: Vec<(String, String)> = Vec::new();
    for s in sessions {
        s.validate()?;
        let dir = session_dir(root, s.participant, s.session);
        let rel_dir = dir.strip_prefix(root).expect("dir under root").to_path_buf();
        for (name, bytes) in encode_session(s, &dir)? {
            sink(&dir.join(&name), &bytes)?;
            let rel = rel_dir.join(&name).to_string_lossy().replace('\\', "/");
            manifest.push((rel, hex::encode(Sha256::digest(&bytes))));
        }
    }
    manifest.sort();
    Ok(manifest.iter().map(|(p, h)| format!("{h}  {p}\n")).collect())
}

/// Writes `sessions` under `root` and a SHA-256 manifest of every file.
/// Returns the dataset checksum (hash of the manifest).
pub fn write_canonical(root: &Path, sessions: &[SessionDataset]) -> Result<String> {
    let text = build_manifest(root, sessions, |path, bytes| {
        let dir = path.parent().expect("file inside a session directory");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(path, bytes)
    })?;
    write(&root.join(MANIFEST_NAME), text.as_bytes())?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// The checksum [`write_canonical`] would return, computed in memory.
pub fn dataset_checksum(sessions: &[SessionDataset]) -> Result<String> {
    let text = build_manifest(Path::new(""), sessions, |_, _| Ok(()))?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

fn numbered_dirs(dir: &Path, prefix: &str) -> Result<Vec<(u32, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(n) = name.strip_prefix(prefix) {
            if entry.path().is_dir() {
                let id = n
                    .parse()
                    .map_err(|_| data_err(&entry.path(), "directory suffix is not a number"))?;
                out.push((id, entry.path()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn load_session(dir: &Path, participant: u32, session: u32) -> Result<SessionDataset> {
    let meta = Sidecar::load(&dir.join("session.meta"))?;
    if meta.get("format")? != FORMAT_TAG {
        return Err(data_err(&meta.path, "unsupported format tag"));
    }
    if meta.parse::<u32>("participant")? != participant || meta.parse::<u32>("session")? != session {
        return Err(data_err(
            &meta.path,
            "participant/session disagree with the directory name",
        ));
    }
    let lsb: f64 = meta.parse("lsb")?;
    if !(lsb > 0.0 && lsb.is_finite()) {
        return Err(data_err(&meta.path, "lsb must be positive"));
    }
    let mut cycles = Vec::new();
    for id in 1..=meta.parse::<u32>("cycles")? {
        let side = Sidecar::load(&dir.join(format!("cycle_{id}.meta")))?;
        let gestures: usize = side.parse("gestures")?;
        if gestures != NUM_GESTURES {
            return Err(data_err(
                &side.path,
                format!("gesture count {gestures} differs from the expected {NUM_GESTURES}"),
            ));
        }
        let mut spans = Vec::new();
        for v in side.all("span") {
            let f: Vec<usize> = side.fields("span", v, 3)?;
            spans.push(GestureSpan {
                gesture: f[0],
                start: f[1],
                len: f[2],
            });
        }
        if spans.len() != gestures {
            return Err(data_err(
                &side.path,
                format!("gesture count {gestures} but {} spans listed", spans.len()),
            ));
        }
        let signal = read_signal(
            &dir.join(format!("cycle_{id}.i16")),
            side.parse("channels")?,
            side.parse("samples")?,
            lsb,
            side.parse("sample_rate")?,
        )?;
        cycles.push(Cycle { id, signal, spans });
    }
    let mut runs = Vec::new();
    for id in 1..=meta.parse::<u32>("evaluation_runs")? {
        let side = Sidecar::load(&dir.join(format!("eval_{id}.meta")))?;
        let mut trials = Vec::new();
        for v in side.all("trial") {
            let f: Vec<f64> = side.fields("trial", v, 6)?;
            let whole = |x: f64, what: &str| -> Result<usize> {
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(data_err(
                        &side.path,
                        format!("trial {what} {x} is not a non-negative integer"),
                    ))
                }
            };
            trials.push(Trial {
                gesture: whole(f[0], "gesture")?,
                level: whole(f[1], "level")? as u8,
                pitch: f[2],
                yaw: f[3],
                start: whole(f[4], "start")?,
                len: whole(f[5], "len")?,
            });
        }
        if trials.len() != side.parse::<usize>("trials")? {
            return Err(data_err(&side.path, "trial count disagrees with listed trials"));
        }
        let angles_path = dir.join(format!("eval_{id}.angles"));
        let text =
            String::from_utf8(read(&angles_path)?).map_err(|_| data_err(&angles_path, "angles file is not UTF-8"))?;
        let mut orientation = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(p)), Some(Ok(y)), None) => orientation.push((p, y)),
                _ => return Err(data_err(&angles_path, format!("line {}: expected `pitch yaw`", n + 1))),
            }
        }
        if orientation.len() != side.parse::<usize>("frames")? {
            return Err(data_err(&angles_path, "frame count disagrees with the sidecar"));
        }
        let score = match side.opt("score") {
            Some(_) => Some(side.parse("score")?),
            None => None,
        };
        let signal = read_signal(
            &dir.join(format!("eval_{id}.i16")),
            side.parse("channels")?,
            side.parse("samples")?,
            lsb,
            side.parse("sample_rate")?,
        )?;
        runs.push(EvaluationRun {
            id,
            signal,
            trials,
            frame_rate: side.parse("frame_rate")?,
            orientation,
            score,
        });
    }
    let mut s = SessionDataset {
        participant,
        session,
        day_offset: meta.parse("day_offset")?,
        lsb,
        cycles,
        evaluation_runs: runs,
        checksum: String::new(),
    };
    s.validate().map_err(|e| data_err(dir, e.to_string()))?;
    s.checksum = checksum_session(&s)?;
    Ok(s)
}

/// Verifies every manifest entry against the file on disk.
pub fn verify_manifest(root: &Path) -> Result<String> {
    let path = root.join(MANIFEST_NAME);
    let bytes = read(&path)?;
    let text = String::from_utf8(bytes).map_err(|_| data_err(&path, "manifest is not UTF-8"))?;
    for (n, line) in text.lines().enumerate() {
        let (hash, rel) = line
            .split_once("  ")
            .ok_or_else(|| data_err(&path, format!("line {}: expected `<sha256>  <path>`", n + 1)))?;
        let file = root.join(rel);
        let actual = hex::encode(Sha256::digest(read(&file)?));
        if actual != hash {
            return Err(data_err(&file, "checksum differs from the manifest"));
        }
    }
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// A loaded dataset with its checksum (the manifest hash).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub sessions: Vec<SessionDataset>,
    pub checksum: String,
}

/// Loads and validates every session under `root`, ordered by participant
/// then session. The manifest, when present, is verified first.
pub fn load_canonical(root: &Path) -> Result<LoadedDataset> {
    if !root.is_dir() {
        return Err(data_err(root, "dataset directory does not exist"));
    }
    let checksum = if root.join(MANIFEST_NAME).exists() {
        verify_manifest(root)?
    } else {
        String::new()
    };
    let mut sessions = Vec::new();
    for (participant, pdir) in numbered_dirs(root, "participant_")? {
        for (session, sdir) in numbered_dirs(&pdir, "session_")? {
            sessions.push(load_session(&sdir, participant, session)?);
        }
    }
    if sessions.is_empty() {
        return Err(data_err(root, "no participant_*/session_* directories found"));
    }
    let checksum = if checksum.is_empty() {
        let mut h = Sha256::new();
        for s in &sessions {
            h.update(s.checksum.as_bytes());
        }
        hex::encode(h.finalize())
    } else {
        checksum
    };
    Ok(LoadedDataset { sessions, checksum })
}
