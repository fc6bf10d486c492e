//! Training texts annotated with which parts the loss is computed on.
//!
//! Builders produce an [`AnnotatedText`]: the rendered string plus spans
//! that partition it into supervised and unsupervised pieces. A
//! [`Tokenizer`] that never merges across span boundaries turns that into a
//! per-token loss mask with [`project_mask`].

mod chatml;
mod task;
mod tokenizer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markup::{MarkupError, IMG_END, IMG_START};

pub use chatml::{build_chatml, ChatTurn, Role, IM_END, IM_START};
pub use task::{build_task_sample, Task, TaskFields, EOS};
pub use tokenizer::{project_mask, MaskedTokens, MockTokenizer, Token, Tokenizer, RESERVED};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChatError {
    #[error("{task} sample is missing field {field:?}")]
    MissingField { task: &'static str, field: &'static str },
    #[error("dialogue has no turns")]
    EmptyDialogue,
    #[error("turn {index}: expected {expected:?}, found {found:?}")]
    RoleOrderViolation { index: usize, expected: Role, found: Role },
    #[error("token {index} [{start}, {end}) crosses a span boundary")]
    SpanAlignmentError { index: usize, start: usize, end: usize },
    #[error("tokenizer output does not reproduce the text: {0}")]
    TokenizerMismatch(String),
    #[error(transparent)]
    Markup(#[from] MarkupError),
}

pub type Result<T> = std::result::Result<T, ChatError>;

/// A piece of a training text. Image placeholders are never supervised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    pub supervised: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl Segment {
    pub fn prompt(text: impl Into<String>) -> Self {
        Self { text: text.into(), supervised: false, image_ref: None }
    }

    pub fn target(text: impl Into<String>) -> Self {
        Self { text: text.into(), supervised: true, image_ref: None }
    }

    pub fn image(image_ref: impl Into<String>) -> Self {
        let image_ref = image_ref.into();
        Self {
            text: format!("{IMG_START}{image_ref}{IMG_END}"),
            supervised: false,
            image_ref: Some(image_ref),
        }
    }
}

/// Byte range `[start, end)` of an [`AnnotatedText`] and whether the loss
/// covers it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub supervised: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePlacement {
    /// Byte offset of the image's `<img>` tag.
    pub position: usize,
    pub image_ref: String,
    /// Byte length of the `<img>...</img>` placeholder.
    pub len: usize,
}

/// Rendered text whose spans partition `[0, text.len())`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedText {
    pub text: String,
    pub spans: Vec<Span>,
    pub images: Vec<ImagePlacement>,
}

impl AnnotatedText {
    pub fn from_segments<I: IntoIterator<Item = Segment>>(segments: I) -> Self {
        let mut out = Self::default();
        for s in segments {
            out.push(s);
        }
        out
    }

    /// Appends a segment as its own span. Empty segments are skipped.
    pub fn push(&mut self, seg: Segment) {
        if seg.text.is_empty() {
            return;
        }
        let start = self.text.len();
        self.text.push_str(&seg.text);
        let end = self.text.len();
        let supervised = seg.supervised && seg.image_ref.is_none();
        if let Some(image_ref) = seg.image_ref {
            self.images.push(ImagePlacement { position: start, image_ref, len: end - start });
        }
        self.spans.push(Span { start, end, supervised });
    }

    pub fn span_text(&self, span: &Span) -> &str {
        &self.text[span.start..span.end]
    }

    /// Texts of the supervised spans, in order.
    pub fn supervised_texts(&self) -> Vec<&str> {
        self.spans.iter().filter(|s| s.supervised).map(|s| self.span_text(s)).collect()
    }

    /// The unsupervised prefix before the first supervised span.
    pub fn prefix(&self) -> &str {
        let end = self.spans.iter().find(|s| s.supervised).map_or(self.text.len(), |s| s.start);
        &self.text[..end]
    }

    /// Span end offsets; the boundaries a tokenizer must not cross.
    pub fn boundaries(&self) -> Vec<usize> {
        self.spans.iter().map(|s| s.end).collect()
    }

    /// Checks that the spans tile the text exactly.
    pub fn is_partition(&self) -> bool {
        let mut cursor = 0;
        for s in &self.spans {
            if s.start != cursor || s.end <= s.start || !self.text.is_char_boundary(s.end) {
                return false;
            }
            cursor = s.end;
        }
        cursor == self.text.len()
    }
}
