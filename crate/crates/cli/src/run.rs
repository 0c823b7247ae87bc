//! Per-invocation state: resolved config, seed, output directory, the
//! current stage and the artifacts touched, which end up in the manifest.

use std::cell::RefCell;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use latentprobe::rng;
use latentprobe::transe::{save_embedding, EmbeddingModel};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Sub-seeds derived from the master seed, one per randomized stage.
pub mod seeds {
    pub const SPLIT: u64 = 1;
    pub const NEGATIVES: u64 = 2;
    pub const PAIRS: u64 = 3;
    pub const BASELINE: u64 = 4;
    pub const PERMUTATION: u64 = 5;
    pub const PROBE: u64 = 6;
    pub const ERASE: u64 = 7;
    pub const USERS: u64 = 8;
    pub const IMPACT: u64 = 9;
    pub const PERTURB: u64 = 10;
    pub const PRECISION: u64 = 11;
}

pub struct Run {
    pub subcommand: &'static str,
    pub config: RunConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub seed_generated: bool,
    pub hash: String,
    stage: RefCell<String>,
    inputs: RefCell<Vec<PathBuf>>,
    outputs: RefCell<Vec<PathBuf>>,
    started: Instant,
}

impl Run {
    /// Resolves the seed: explicit seeds always win; deterministic runs of
    /// randomized subcommands must have one.
    pub fn new(subcommand: &'static str, mut config: RunConfig, out: PathBuf, randomized: bool) -> CliResult<Self> {
        let mut seed_generated = false;
        let seed = match config.seed {
            Some(s) => s,
            None if randomized && config.deterministic => {
                return Err(CliError::Validation(format!(
                    "`{subcommand}` is randomized: deterministic mode needs an explicit --seed or `seed` in the config"
                )))
            }
            None => {
                seed_generated = true;
                let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
                let s = rng::derive(nanos as u64, std::process::id() as u64);
                if randomized {
                    log::warn!("no seed given; using generated seed {s}");
                }
                s
            }
        };
        config.seed = Some(seed);
        std::fs::create_dir_all(&out)
            .map_err(|e| CliError::Validation(format!("output directory {} is not writable: {e}", out.display())))?;
        let hash = config.hash();
        Ok(Run {
            subcommand,
            config,
            out,
            seed,
            seed_generated,
            hash,
            stage: RefCell::new("validate".into()),
            inputs: RefCell::new(Vec::new()),
            outputs: RefCell::new(Vec::new()),
            started: Instant::now(),
        })
    }

    pub fn derive(&self, stream: u64) -> u64 {
        rng::derive(self.seed, stream)
    }

    pub fn stage(&self, name: &str) {
        log::info!("{}: {name}", self.subcommand);
        *self.stage.borrow_mut() = name.to_string();
    }

    pub fn current_stage(&self) -> String {
        self.stage.borrow().clone()
    }

    /// Wraps a stage failure with the current stage name.
    pub fn fail<E: std::error::Error + Send + Sync + 'static>(&self, e: E) -> CliError {
        CliError::Runtime {
            stage: self.current_stage(),
            source: Box::new(e),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// The configured path, or `default` inside the output directory; it
    /// must exist.
    pub fn input(&self, configured: Option<&PathBuf>, default: &str, what: &str) -> CliResult<PathBuf> {
        let path = configured.cloned().unwrap_or_else(|| self.path(default));
        if !path.is_file() {
            return Err(CliError::Validation(format!("{what} file {} does not exist", path.display())));
        }
        self.inputs.borrow_mut().push(path.clone());
        Ok(path)
    }

    /// Like [`Run::input`] but absent files are not an error.
    pub fn optional_input(&self, configured: Option<&PathBuf>, default: &str, what: &str) -> CliResult<Option<PathBuf>> {
        match configured {
            Some(_) => self.input(configured, default, what).map(Some),
            None if self.path(default).is_file() => self.input(None, default, what).map(Some),
            None => Ok(None),
        }
    }

    pub fn open(&self, path: &Path) -> CliResult<File> {
        File::open(path).map_err(|e| self.fail(e))
    }

    /// A new artifact file inside the output directory.
    pub fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| self.fail(e))?;
        }
        let file = File::create(&path).map_err(|e| self.fail(e))?;
        self.outputs.borrow_mut().push(path);
        Ok(BufWriter::new(file))
    }

    /// Writes a JSON report stamped with the config hash and seed.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut v = serde_json::to_value(value).map_err(|e| self.fail(e))?;
        if let Value::Object(map) = &mut v {
            map.insert("config_hash".into(), json!(self.hash));
            map.insert("seed".into(), json!(self.seed));
        }
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &v).map_err(|e| self.fail(e))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| self.fail(e))
    }

    pub fn save_embedding(&self, name: &str, model: &EmbeddingModel) -> CliResult<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| self.fail(e))?;
        }
        save_embedding(model, &path).map_err(|e| self.fail(e))?;
        self.outputs.borrow_mut().push(path);
        Ok(())
    }

    /// `manifest_<subcommand>.json`; written on success and on failure.
    pub fn write_manifest(&self, error: Option<&CliError>) -> std::io::Result<PathBuf> {
        let describe = |paths: &[PathBuf]| -> Vec<Value> {
            paths
                .iter()
                .map(|p| json!({ "path": p.display().to_string(), "sha256": file_digest(p) }))
                .collect()
        };
        let manifest = json!({
            "subcommand": self.subcommand,
            "status": if error.is_some() { "failed" } else { "ok" },
            "failing_stage": error.and_then(|e| e.stage().map(str::to_string).or(Some(self.current_stage()))),
            "error": error.map(|e| e.to_string()),
            "config_hash": self.hash,
            "seed": self.seed,
            "seed_generated": self.seed_generated,
            "deterministic": self.config.deterministic,
            "threads": self.config.threads,
            "inputs": describe(&self.inputs.borrow()),
            "outputs": describe(&self.outputs.borrow()),
            "versions": { "latentprobe": latentprobe::VERSION, "latentprobe-cli": env!("CARGO_PKG_VERSION") },
            "wall_time_s": self.started.elapsed().as_secs_f64(),
            "config": self.config,
        });
        let path = self.path(&format!("manifest_{}.json", self.subcommand));
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

fn file_digest(path: &Path) -> Option<String> {
    let mut file = File::open(path).ok()?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).ok()?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Some(format!("{:x}", hasher.finalize()))
}
