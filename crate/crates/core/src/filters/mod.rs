//! Record-level corpus cleaning.
//!
//! Every check here is a pure function of one record and a [`FilterConfig`],
//! so a pipeline can shard records across workers freely. Drop counts are
//! aggregated with [`DropHistogram`], whose merge is associative and
//! commutative.

mod document;
mod grit;
mod pair;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use document::{filter_document_text, DocumentKind};
pub use grit::{denest_grit, select_spans, spans_conflict, GroundedCaption, GroundedSpan};
pub use pair::{
    check_special_tags, clean_html, filter_pair, screen_pair, select_longest_caption, HtmlResidue,
    Screened,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("record {id}: missing {field}")]
    IncompleteRecord { id: String, field: &'static str },
    #[error("caption group is empty")]
    EmptyGroup,
    #[error("span {index} [{start}, {end}) is outside a caption of {len} chars")]
    InvalidSpan { index: usize, start: usize, end: usize, len: usize },
    #[error("invalid filter config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Markup(#[from] crate::markup::MarkupError),
}

pub type Result<T> = std::result::Result<T, FilterError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Zh,
    Other,
}

/// One image-text (or document-text) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    #[serde(default)]
    pub dataset: String,
    #[serde(default)]
    pub image_width: Option<u32>,
    #[serde(default)]
    pub image_height: Option<u32>,
    pub text: String,
    #[serde(default = "default_language")]
    pub language: Language,
    #[serde(default)]
    pub clip_score: Option<f64>,
    #[serde(default)]
    pub image_key: String,
    #[serde(default)]
    pub group_key: Option<String>,
}

fn default_language() -> Language {
    Language::Other
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    #[serde(rename = "R1_aspect")]
    R1Aspect,
    #[serde(rename = "R2_small")]
    R2Small,
    #[serde(rename = "R3_clip")]
    R3Clip,
    #[serde(rename = "R4_script")]
    R4Script,
    #[serde(rename = "R5_emoji")]
    R5Emoji,
    #[serde(rename = "R6_length")]
    R6Length,
    #[serde(rename = "R7_html")]
    R7Html,
    #[serde(rename = "R8_pattern")]
    R8Pattern,
    #[serde(rename = "P_charcount")]
    PCharcount,
    #[serde(rename = "P_latin_ext")]
    PLatinExt,
    #[serde(rename = "P_pua")]
    PPua,
    #[serde(rename = "T_special_tag")]
    TSpecialTag,
}

impl RuleId {
    /// The image-text pair rules in evaluation order.
    pub const PAIR_RULES: [RuleId; 8] = [
        RuleId::R1Aspect,
        RuleId::R2Small,
        RuleId::R3Clip,
        RuleId::R4Script,
        RuleId::R5Emoji,
        RuleId::R6Length,
        RuleId::R7Html,
        RuleId::R8Pattern,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::R1Aspect => "R1_aspect",
            RuleId::R2Small => "R2_small",
            RuleId::R3Clip => "R3_clip",
            RuleId::R4Script => "R4_script",
            RuleId::R5Emoji => "R5_emoji",
            RuleId::R6Length => "R6_length",
            RuleId::R7Html => "R7_html",
            RuleId::R8Pattern => "R8_pattern",
            RuleId::PCharcount => "P_charcount",
            RuleId::PLatinExt => "P_latin_ext",
            RuleId::PPua => "P_pua",
            RuleId::TSpecialTag => "T_special_tag",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Keep,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub decision: Decision,
    pub rule_id: Option<RuleId>,
    pub detail: String,
}

impl FilterVerdict {
    pub fn keep() -> Self {
        Self { decision: Decision::Keep, rule_id: None, detail: String::new() }
    }

    pub fn drop(rule: RuleId, detail: impl Into<String>) -> Self {
        Self { decision: Decision::Drop, rule_id: Some(rule), detail: detail.into() }
    }

    pub fn is_keep(&self) -> bool {
        self.decision == Decision::Keep
    }
}

/// Scripts whose letters are allowed in captions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Script {
    /// ASCII letters.
    LatinBasic,
    /// Latin-1 Supplement letters and Latin Extended-A/B.
    LatinExtended,
    /// Han ideographs.
    Cjk,
}

impl Script {
    pub fn contains(self, c: char) -> bool {
        let cp = c as u32;
        match self {
            Script::LatinBasic => c.is_ascii(),
            Script::LatinExtended => (0xC0..=0x24F).contains(&cp),
            Script::Cjk => matches!(
                cp,
                0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F
            ),
        }
    }
}

/// Inclusive code-point range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeRange {
    pub start: u32,
    pub end: u32,
}

impl CodeRange {
    pub const fn new(start: u32, end: u32) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, c: char) -> bool {
        (self.start..=self.end).contains(&(c as u32))
    }
}

pub const DEFAULT_EMOJI_RANGES: [CodeRange; 6] = [
    CodeRange::new(0x1F000, 0x1FAFF),
    CodeRange::new(0x2600, 0x27BF),
    CodeRange::new(0x2B50, 0x2B55),
    CodeRange::new(0x231A, 0x231B),
    CodeRange::new(0x23E9, 0x23FA),
    CodeRange::new(0xFE0F, 0xFE0F),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub max_aspect_ratio: f64,
    pub min_side_px: u32,
    /// Minimum CLIP score per dataset tag; datasets without an entry skip the check.
    pub clip_thresholds: BTreeMap<String, f64>,
    pub allowed_scripts: Vec<Script>,
    pub emoji_ranges: Vec<CodeRange>,
    pub min_chars: usize,
    pub max_chars: usize,
    /// Glob patterns (`*`, `?`) matched anywhere in the cleaned text.
    pub banned_patterns: Vec<String>,
    pub special_tags: Vec<String>,
    /// Rules skipped by [`filter_pair`].
    pub disabled_rules: Vec<RuleId>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_aspect_ratio: 3.0,
            min_side_px: 224,
            clip_thresholds: BTreeMap::new(),
            allowed_scripts: vec![Script::LatinBasic, Script::Cjk],
            emoji_ranges: DEFAULT_EMOJI_RANGES.to_vec(),
            min_chars: 5,
            max_chars: 1024,
            banned_patterns: Vec::new(),
            special_tags: vec!["<PERSON>".to_string()],
            disabled_rules: Vec::new(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_chars >= self.max_chars {
            return Err(FilterError::InvalidConfig(format!(
                "min_chars ({}) must be below max_chars ({})",
                self.min_chars, self.max_chars
            )));
        }
        if !(self.max_aspect_ratio > 1.0) {
            return Err(FilterError::InvalidConfig(format!(
                "max_aspect_ratio must exceed 1, got {}",
                self.max_aspect_ratio
            )));
        }
        Ok(())
    }

    pub fn enabled(&self, rule: RuleId) -> bool {
        !self.disabled_rules.contains(&rule)
    }
}

/// Drop counts keyed by rule. Merging is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropHistogram(pub BTreeMap<RuleId, u64>);

impl DropHistogram {
    pub fn record(&mut self, verdict: &FilterVerdict) {
        if let Some(rule) = verdict.rule_id {
            *self.0.entry(rule).or_default() += 1;
        }
    }

    pub fn merge(mut self, other: &DropHistogram) -> Self {
        for (rule, n) in &other.0 {
            *self.0.entry(*rule).or_default() += n;
        }
        self
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn get(&self, rule: RuleId) -> u64 {
        self.0.get(&rule).copied().unwrap_or(0)
    }
}
