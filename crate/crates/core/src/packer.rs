//! Fixed-length sequence packing.
//!
//! Samples are grouped by task and concatenated, in arrival order, into
//! sequences of at most `max_len` positions. Each image costs a fixed number
//! of positions: the resampled feature rows plus the two image delimiters.
//! A sequence stays open until a sample fails to fit, at which point a new
//! one is opened for that task; samples are never split or reordered.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PackError {
    #[error("max_len ({max_len}) must exceed image_cost ({image_cost})")]
    InvalidConfig { max_len: usize, image_cost: usize },
    #[error("sample {id} has no text tokens")]
    EmptySample { id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub task: String,
    /// Text tokens, excluding image placeholders.
    pub token_len: usize,
    #[serde(default)]
    pub n_images: usize,
}

impl Sample {
    pub fn new(id: impl Into<String>, task: impl Into<String>, token_len: usize, n_images: usize) -> Result<Self, PackError> {
        let id = id.into();
        if token_len == 0 {
            return Err(PackError::EmptySample { id });
        }
        Ok(Self { id, task: task.into(), token_len, n_images })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedSequence {
    pub task: String,
    pub sample_ids: Vec<String>,
    pub total_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PackerConfig {
    pub max_len: usize,
    pub image_cost: usize,
}

/// Feature rows per image after resampling.
pub const IMAGE_FEATURES: usize = 256;

impl Default for PackerConfig {
    fn default() -> Self {
        Self { max_len: 2048, image_cost: IMAGE_FEATURES + 2 }
    }
}

impl PackerConfig {
    pub fn validate(&self) -> Result<(), PackError> {
        if self.max_len <= self.image_cost {
            return Err(PackError::InvalidConfig { max_len: self.max_len, image_cost: self.image_cost });
        }
        Ok(())
    }
}

/// Positions a sample occupies in a packed sequence.
pub fn effective_len(s: &Sample, cfg: &PackerConfig) -> usize {
    s.token_len + s.n_images * cfg.image_cost
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packing {
    /// Sequences in the order they were opened.
    pub sequences: Vec<PackedSequence>,
    /// Ids of samples longer than `max_len`, in arrival order.
    pub dropped: Vec<String>,
}

pub fn pack(samples: &[Sample], cfg: &PackerConfig) -> Packing {
    let mut out = Packing::default();
    let mut open: HashMap<&str, usize> = HashMap::new();
    for s in samples {
        let len = effective_len(s, cfg);
        if len > cfg.max_len {
            out.dropped.push(s.id.clone());
            continue;
        }
        let fits = open
            .get(s.task.as_str())
            .filter(|&&i| out.sequences[i].total_len + len <= cfg.max_len)
            .copied();
        let idx = match fits {
            Some(i) => i,
            None => {
                out.sequences.push(PackedSequence {
                    task: s.task.clone(),
                    sample_ids: Vec::new(),
                    total_len: 0,
                });
                let i = out.sequences.len() - 1;
                open.insert(s.task.as_str(), i);
                i
            }
        };
        let seq = &mut out.sequences[idx];
        seq.sample_ids.push(s.id.clone());
        seq.total_len += len;
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskUtilization {
    pub sequences: usize,
    pub samples: usize,
    pub tokens: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UtilizationReport {
    pub per_task: BTreeMap<String, TaskUtilization>,
    pub sequences: usize,
    pub max_len: usize,
    /// `Σ total_len / (sequences · max_len)`; `None` when nothing was packed.
    pub mean_fill: Option<f64>,
}

pub fn utilization_report(sequences: &[PackedSequence], max_len: usize) -> UtilizationReport {
    let mut per_task: BTreeMap<String, TaskUtilization> = BTreeMap::new();
    let mut tokens = 0;
    for s in sequences {
        let t = per_task.entry(s.task.clone()).or_default();
        t.sequences += 1;
        t.samples += s.sample_ids.len();
        t.tokens += s.total_len;
        tokens += s.total_len;
    }
    let mean_fill = (!sequences.is_empty() && max_len > 0)
        .then(|| tokens as f64 / (sequences.len() * max_len) as f64);
    UtilizationReport { per_task, sequences: sequences.len(), max_len, mean_fill }
}
