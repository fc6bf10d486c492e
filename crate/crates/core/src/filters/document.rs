use serde::{Deserialize, Serialize};

use super::{CodeRange, CorpusRecord, FilterConfig, FilterVerdict, RuleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocumentKind {
    Pdf,
    Html,
}

/// Latin Extended-A and Latin Extended-B.
const LATIN_EXTENDED: [CodeRange; 2] = [CodeRange::new(0x0100, 0x017F), CodeRange::new(0x0180, 0x024F)];
/// Basic Multilingual Plane private use area.
const PRIVATE_USE: CodeRange = CodeRange::new(0xE000, 0xF8FF);

/// Text checks for pages extracted from PDF or HTML documents.
///
/// Character count bounds apply to both kinds, Latin Extended-A/B letters
/// reject PDF pages only, and private-use code points reject both.
pub fn filter_document_text(r: &CorpusRecord, kind: DocumentKind, cfg: &FilterConfig) -> FilterVerdict {
    let n = r.text.chars().count();
    if n < cfg.min_chars || n > cfg.max_chars {
        return FilterVerdict::drop(
            RuleId::PCharcount,
            format!("{n} chars outside [{}, {}]", cfg.min_chars, cfg.max_chars),
        );
    }
    if kind == DocumentKind::Pdf {
        if let Some(c) = r.text.chars().find(|&c| LATIN_EXTENDED.iter().any(|rg| rg.contains(c))) {
            return FilterVerdict::drop(RuleId::PLatinExt, format!("U+{:04X}", c as u32));
        }
    }
    if let Some(c) = r.text.chars().find(|&c| PRIVATE_USE.contains(c)) {
        return FilterVerdict::drop(RuleId::PPua, format!("U+{:04X}", c as u32));
    }
    FilterVerdict::keep()
}
