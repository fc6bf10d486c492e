//! Batch front end for `vlcorpus`: JSON Lines in, JSON Lines out, plus a
//! JSON run report.
//!
//! Records are processed in chunks on a rayon pool and written back in input
//! order, so the worker count never changes an output file. A line that
//! fails to parse or validate is counted in [`RunReport::errors`] and the
//! run continues; only IO and configuration problems abort.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vlcorpus::filters::FilterConfig;
use vlcorpus::packer::PackerConfig;

pub mod commands;

/// Lines handed to the pool at once.
const CHUNK: usize = 4096;
/// Error messages kept in a report.
const MAX_ERROR_SAMPLES: usize = 20;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    /// 1 for configuration problems, 2 for IO failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } => 2,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerChoice {
    /// Byte-level tokenizer with the reserved tag literals as single tokens.
    #[default]
    Mock,
}

/// Contents of the `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub filters: FilterConfig,
    pub packer: PackerConfig,
    pub tokenizer: TokenizerChoice,
    pub workers: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Everything a batch command needs: where to read and write, and the
/// module configs.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub output: Option<PathBuf>,
    /// Extra outputs such as a verdict stream; kept apart from `output`.
    pub side_outputs: Vec<PathBuf>,
    pub report: Option<PathBuf>,
    pub filters: FilterConfig,
    pub packer: PackerConfig,
    pub tokenizer: TokenizerChoice,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            output: None,
            side_outputs: Vec::new(),
            report: None,
            filters: FilterConfig::default(),
            packer: PackerConfig::default(),
            tokenizer: TokenizerChoice::Mock,
            workers: 1,
        }
    }
}

impl PipelineConfig {
    /// Merges a config file (if any) with command-line values; a `--workers`
    /// flag wins over the file.
    pub fn from_file(config: Option<&Path>, workers: Option<usize>) -> Result<Self> {
        let file = config.map(ConfigFile::load).transpose()?.unwrap_or_default();
        Ok(Self {
            filters: file.filters,
            packer: file.packer,
            tokenizer: file.tokenizer,
            workers: workers.or(file.workers).unwrap_or(1),
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.inputs.is_empty() {
            return Err(CliError::Config("no input given".into()));
        }
        let mut seen: Vec<&Path> = Vec::new();
        let paths = self
            .inputs
            .iter()
            .chain(&self.output)
            .chain(&self.side_outputs)
            .chain(&self.report);
        for p in paths {
            if seen.contains(&p.as_path()) {
                return Err(CliError::Config(format!("{} is used twice", p.display())));
            }
            seen.push(p);
        }
        self.filters.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.packer.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for p in &self.inputs {
            File::open(p).map_err(|e| CliError::io(p, e))?;
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))
    }
}

/// Summary of one batch run. `records_in = records_kept + Σ drops + errors`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub records_in: u64,
    pub records_kept: u64,
    /// Drop counts keyed by rule id (or `oversize` when packing).
    pub drops: BTreeMap<String, u64>,
    pub errors: u64,
    /// The first few per-line error messages, as `path:line: message`.
    pub error_samples: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sequences_out: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_fill: Option<f64>,
    /// The only field that differs between identical runs.
    pub wall_time_secs: f64,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        Self { command: command.to_string(), ..Self::default() }
    }

    pub fn balanced(&self) -> bool {
        self.records_in == self.records_kept + self.drops.values().sum::<u64>() + self.errors
    }

    pub fn keep(&mut self) {
        self.records_in += 1;
        self.records_kept += 1;
    }

    pub fn drop(&mut self, reason: &str) {
        self.records_in += 1;
        *self.drops.entry(reason.to_string()).or_default() += 1;
    }

    pub fn error(&mut self, at: &Location, message: impl std::fmt::Display) {
        self.records_in += 1;
        self.errors += 1;
        if self.error_samples.len() < MAX_ERROR_SAMPLES {
            self.error_samples.push(format!("{at}: {message}"));
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}

/// Position of a line in the inputs, 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub path: PathBuf,
    pub line: usize,
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.path.display(), self.line)
    }
}

/// Runs `f` over every non-blank line of the inputs on the pool and feeds
/// the results to `sink` in input order.
pub fn map_lines<T, F, S>(cfg: &PipelineConfig, f: F, mut sink: S) -> Result<()>
where
    T: Send,
    F: Fn(&Location, &str) -> T + Sync,
    S: FnMut(&Location, T) -> Result<()>,
{
    let pool = cfg.pool()?;
    for path in &cfg.inputs {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        loop {
            let mut chunk = Vec::with_capacity(CHUNK);
            for (i, line) in lines.by_ref().take(CHUNK) {
                let line = line.map_err(|e| CliError::io(path, e))?;
                if !line.trim().is_empty() {
                    chunk.push((Location { path: path.clone(), line: i + 1 }, line));
                }
            }
            if chunk.is_empty() {
                break;
            }
            let results: Vec<T> = pool.install(|| chunk.par_iter().map(|(at, l)| f(at, l)).collect());
            for ((at, _), r) in chunk.iter().zip(results) {
                sink(at, r)?;
            }
        }
    }
    Ok(())
}

/// A buffered file writer that reports errors against its path.
pub struct Output {
    path: PathBuf,
    inner: BufWriter<File>,
}

impl Output {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), inner: BufWriter::new(file) })
    }

    pub fn json_line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.inner, value).map_err(|e| CliError::io(&self.path, e.into()))?;
        self.text("\n")
    }

    pub fn text(&mut self, s: &str) -> Result<()> {
        self.inner.write_all(s.as_bytes()).map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::Config(format!("{what} path is required")))
}
