//! Run manifests, digests and artifact files.
//!
//! The digest covers the crate version, the seed, the normalized command line
//! and the canonical content of every referenced input file. Worker count,
//! output directory and the time budget are excluded, so the same experiment
//! run anywhere gets the same digest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ergolab::{LabError, Result};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Flags that never influence results.
pub const EXCLUDED_FLAGS: &[&str] = &["--workers", "--out-dir", "--budget-ms"];
/// Flags whose value is a file; the digest uses the content instead of the path.
pub const FILE_FLAGS: &[&str] = &["--config", "--system", "--input", "--set"];

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256(text: &[u8]) -> String {
    hex(&Sha256::digest(text))
}

/// Content fingerprint: canonical form for config files, raw bytes otherwise.
fn file_fingerprint(flag: &str, path: &str) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| LabError::invalid(format!("cannot read {path}: {e}")))?;
    if flag == "--config" || flag == "--system" {
        let text = String::from_utf8_lossy(&bytes);
        if let Ok(cfg) = ExperimentConfig::parse(&text) {
            return Ok(sha256(cfg.canonical().as_bytes()));
        }
    }
    Ok(sha256(&bytes))
}

/// Command line without the program name and excluded flags, with file
/// arguments replaced by content fingerprints.
pub fn normalize_args(argv: &[String]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 1;
    while i < argv.len() {
        let arg = &argv[i];
        let (flag, inline) = match arg.split_once('=') {
            Some((f, v)) if f.starts_with("--") => (f.to_string(), Some(v.to_string())),
            _ => (arg.clone(), None),
        };
        let takes_value = EXCLUDED_FLAGS.contains(&flag.as_str()) || FILE_FLAGS.contains(&flag.as_str());
        if !takes_value {
            out.push(arg.clone());
            i += 1;
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => {
                i += 1;
                argv.get(i).cloned().unwrap_or_default()
            }
        };
        i += 1;
        if FILE_FLAGS.contains(&flag.as_str()) {
            out.push(format!("{flag}=@{}", file_fingerprint(&flag, &value)?));
        }
    }
    Ok(out)
}

pub fn digest(args: &[String], seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(format!("lab {}\n", env!("CARGO_PKG_VERSION")));
    h.update(format!("seed={seed}\n"));
    for a in args {
        h.update(a.as_bytes());
        h.update([0x1f]);
    }
    hex(&h.finalize())
}

/// One invocation: digest, timings and the artifacts written so far.
pub struct Run {
    pub args: Vec<String>,
    pub seed: u64,
    pub digest: String,
    pub workers: usize,
    out_dir: PathBuf,
    started: Instant,
    timings: Vec<(String, f64)>,
    artifacts: Vec<String>,
}

impl Run {
    pub fn new(argv: &[String], seed: u64, workers: usize, out_dir: PathBuf) -> Result<Self> {
        let args = normalize_args(argv)?;
        let digest = digest(&args, seed);
        Ok(Run { args, seed, digest, workers, out_dir, started: Instant::now(), timings: Vec::new(), artifacts: Vec::new() })
    }

    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let v = f();
        self.timings.push((name.to_string(), t.elapsed().as_secs_f64() * 1e3));
        v
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.started.elapsed().as_secs_f64() * 1e3
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| LabError::invalid(format!("cannot create {}: {e}", self.out_dir.display())))?;
        self.artifacts.push(name.to_string());
        Ok(self.out_dir.join(name))
    }

    fn write(path: &Path, text: &str) -> Result<()> {
        fs::write(path, text).map_err(|e| LabError::invalid(format!("cannot write {}: {e}", path.display())))
    }

    /// Pretty JSON with the digest as the first field.
    pub fn write_json(&mut self, name: &str, body: Value) -> Result<()> {
        let mut obj = Map::new();
        obj.insert("digest".into(), json!(self.digest));
        match body {
            Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("data".into(), other);
            }
        }
        let path = self.path(name)?;
        let text = serde_json::to_string_pretty(&Value::Object(obj)).expect("serializable") + "\n";
        Self::write(&path, &text)
    }

    /// CSV whose first line is a `# digest=` comment.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut text = format!("# digest={}\n{}\n", self.digest, header.join(","));
        for r in rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        let path = self.path(name)?;
        Self::write(&path, &text)
    }

    /// Writes `manifest.json` (the only artifact carrying wall-clock data) and
    /// returns the stdout summary.
    pub fn finish(mut self, command: &str, summary: Value) -> Result<Value> {
        let wall = self.elapsed_ms();
        let timings: Map<String, Value> = self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let artifacts = self.artifacts.clone();
        let manifest = json!({
            "command": self.args,
            "seed": self.seed,
            "versions": {"lab": env!("CARGO_PKG_VERSION")},
            "workers": self.workers,
            "wall_clock_ms": wall,
            "timings_ms": timings,
            "artifacts": artifacts,
        });
        self.write_json("manifest.json", manifest)?;
        let mut out = Map::new();
        out.insert("command".into(), json!(command));
        out.insert("status".into(), json!("ok"));
        out.insert("digest".into(), json!(self.digest));
        if let Value::Object(m) = summary {
            out.extend(m);
        }
        out.insert("runtime_ms".into(), json!(wall.round()));
        Ok(Value::Object(out))
    }
}

/// Shortest round-trip text for a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}
