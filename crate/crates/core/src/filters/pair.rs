use std::fmt;

use super::{CorpusRecord, FilterConfig, FilterError, FilterVerdict, Result, RuleId};

/// Markup left behind after HTML cleaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HtmlResidue {
    /// A `<` opening a tag that is never closed by `>`.
    UnterminatedTag { offset: usize },
    /// A character entity other than the five standard ones.
    UnknownEntity { entity: String },
}

impl fmt::Display for HtmlResidue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HtmlResidue::UnterminatedTag { offset } => {
                write!(f, "unterminated tag at byte {offset}")
            }
            HtmlResidue::UnknownEntity { entity } => write!(f, "unknown entity {entity}"),
        }
    }
}

const ENTITIES: [(&str, char); 5] = [
    ("&amp;", '&'),
    ("&lt;", '<'),
    ("&gt;", '>'),
    ("&quot;", '"'),
    ("&apos;", '\''),
];

/// Strips angle-bracket tags (each replaced by a space), decodes the five
/// standard entities, collapses whitespace runs and trims.
///
/// The first piece of markup that could not be cleaned is reported
/// alongside the cleaned text.
pub fn clean_html(text: &str) -> (String, Option<HtmlResidue>) {
    let mut out = String::with_capacity(text.len());
    let mut residue = None;
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        let c = rest.chars().next().unwrap();
        if c == '<' && rest[1..].starts_with(|n: char| n.is_ascii_alphabetic() || n == '/' || n == '!') {
            match rest.find('>') {
                Some(close) => {
                    out.push(' ');
                    i += close + 1;
                    continue;
                }
                None => {
                    residue.get_or_insert(HtmlResidue::UnterminatedTag { offset: i });
                }
            }
        } else if c == '&' {
            if let Some((name, ch)) = ENTITIES.iter().find(|(name, _)| rest.starts_with(name)) {
                out.push(*ch);
                i += name.len();
                continue;
            }
            let body_len = rest[1..]
                .find(|n: char| !(n.is_ascii_alphanumeric() || n == '#'))
                .unwrap_or(rest.len() - 1);
            if body_len > 0 && rest[1 + body_len..].starts_with(';') {
                residue.get_or_insert(HtmlResidue::UnknownEntity {
                    entity: rest[..body_len + 2].to_string(),
                });
            }
        }
        out.push(c);
        i += c.len_utf8();
    }
    (out.split_whitespace().collect::<Vec<_>>().join(" "), residue)
}

/// `*` matches any run of characters, `?` any single character; the
/// pattern may match anywhere in `text`.
fn glob_contains(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    // reachable[j]: pattern prefix consumed so far can end at text position j,
    // where the implicit leading `*` lets a match start anywhere
    let mut reachable = vec![true; t.len() + 1];
    for &pc in &p {
        let mut next = vec![false; t.len() + 1];
        match pc {
            '*' => {
                let mut seen = false;
                for j in 0..=t.len() {
                    seen |= reachable[j];
                    next[j] = seen;
                }
            }
            _ => {
                for j in 0..t.len() {
                    if reachable[j] && (pc == '?' || pc == t[j]) {
                        next[j + 1] = true;
                    }
                }
            }
        }
        reachable = next;
    }
    reachable.iter().any(|&r| r)
}

/// Result of running the pair rules: the verdict plus the cleaned caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Screened {
    pub verdict: FilterVerdict,
    pub cleaned_text: String,
}

/// Applies the eight image-text pair rules; see [`screen_pair`].
pub fn filter_pair(r: &CorpusRecord, cfg: &FilterConfig) -> Result<FilterVerdict> {
    screen_pair(r, cfg).map(|s| s.verdict)
}

/// Applies the image-text pair rules in order and reports the first that
/// fails:
///
/// 1. aspect ratio above `max_aspect_ratio`
/// 2. shorter side below `min_side_px`
/// 3. CLIP score below the dataset's threshold
/// 4. a letter outside `allowed_scripts`
/// 5. a character in `emoji_ranges`
/// 6. cleaned text length outside `[min_chars, max_chars]`
/// 7. HTML residue that cleaning could not remove
/// 8. a banned pattern in the cleaned text
///
/// Rules 6 to 8 see the text after HTML cleaning and trimming.
pub fn screen_pair(r: &CorpusRecord, cfg: &FilterConfig) -> Result<Screened> {
    let (cleaned_text, residue) = clean_html(&r.text);
    let verdict = first_failure(r, cfg, &cleaned_text, residue)?;
    Ok(Screened { verdict, cleaned_text })
}

fn first_failure(
    r: &CorpusRecord,
    cfg: &FilterConfig,
    cleaned: &str,
    residue: Option<HtmlResidue>,
) -> Result<FilterVerdict> {
    let incomplete = |field| FilterError::IncompleteRecord { id: r.id.clone(), field };
    let dims = || -> Result<(u32, u32)> {
        let w = r.image_width.ok_or_else(|| incomplete("image_width"))?;
        let h = r.image_height.ok_or_else(|| incomplete("image_height"))?;
        if w == 0 || h == 0 {
            return Err(incomplete("non-zero image dimensions"));
        }
        Ok((w, h))
    };

    if cfg.enabled(RuleId::R1Aspect) {
        let (w, h) = dims()?;
        let ratio = w.max(h) as f64 / w.min(h) as f64;
        if ratio > cfg.max_aspect_ratio {
            return Ok(FilterVerdict::drop(
                RuleId::R1Aspect,
                format!("aspect ratio {ratio} > {}", cfg.max_aspect_ratio),
            ));
        }
    }
    if cfg.enabled(RuleId::R2Small) {
        let (w, h) = dims()?;
        if w.min(h) < cfg.min_side_px {
            return Ok(FilterVerdict::drop(
                RuleId::R2Small,
                format!("{w}x{h} has a side below {}", cfg.min_side_px),
            ));
        }
    }
    if cfg.enabled(RuleId::R3Clip) {
        if let Some(&threshold) = cfg.clip_thresholds.get(&r.dataset) {
            let score = r.clip_score.ok_or_else(|| incomplete("clip_score"))?;
            if score < threshold {
                return Ok(FilterVerdict::drop(
                    RuleId::R3Clip,
                    format!("clip score {score} < {threshold} for {}", r.dataset),
                ));
            }
        }
    }
    if cfg.enabled(RuleId::R4Script) {
        let foreign = r
            .text
            .chars()
            .find(|&c| c.is_alphabetic() && !cfg.allowed_scripts.iter().any(|s| s.contains(c)));
        if let Some(c) = foreign {
            return Ok(FilterVerdict::drop(
                RuleId::R4Script,
                format!("letter {c:?} (U+{:04X}) outside allowed scripts", c as u32),
            ));
        }
    }
    if cfg.enabled(RuleId::R5Emoji) {
        if let Some(c) = r.text.chars().find(|&c| cfg.emoji_ranges.iter().any(|rg| rg.contains(c))) {
            return Ok(FilterVerdict::drop(
                RuleId::R5Emoji,
                format!("emoji U+{:04X}", c as u32),
            ));
        }
    }
    if cfg.enabled(RuleId::R6Length) {
        let n = cleaned.chars().count();
        if n < cfg.min_chars || n > cfg.max_chars {
            return Ok(FilterVerdict::drop(
                RuleId::R6Length,
                format!("{n} chars outside [{}, {}]", cfg.min_chars, cfg.max_chars),
            ));
        }
    }
    if cfg.enabled(RuleId::R7Html) {
        if let Some(residue) = residue {
            return Ok(FilterVerdict::drop(RuleId::R7Html, residue.to_string()));
        }
    }
    if cfg.enabled(RuleId::R8Pattern) {
        if let Some(p) = cfg.banned_patterns.iter().find(|p| glob_contains(p, cleaned)) {
            return Ok(FilterVerdict::drop(RuleId::R8Pattern, format!("matches {p:?}")));
        }
    }
    Ok(FilterVerdict::keep())
}

/// Drops captions carrying any configured placeholder tag verbatim.
pub fn check_special_tags(r: &CorpusRecord, cfg: &FilterConfig) -> FilterVerdict {
    match cfg.special_tags.iter().find(|t| !t.is_empty() && r.text.contains(t.as_str())) {
        Some(tag) => FilterVerdict::drop(RuleId::TSpecialTag, format!("contains {tag}")),
        None => FilterVerdict::keep(),
    }
}

/// Picks the caption with the most characters among records describing the
/// same image. Ties go to the lexicographically smallest id.
pub fn select_longest_caption(group: &[CorpusRecord]) -> Result<&CorpusRecord> {
    group
        .iter()
        .min_by(|a, b| {
            b.text
                .chars()
                .count()
                .cmp(&a.text.chars().count())
                .then_with(|| a.id.cmp(&b.id))
        })
        .ok_or(FilterError::EmptyGroup)
}
