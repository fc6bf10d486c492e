//! Removing nested and overlapping grounded phrases from web-scale
//! grounded captions.

use serde::{Deserialize, Serialize};

use super::{FilterError, Result};
use crate::markup::{MarkupNode, Region};

/// A grounded phrase: character offsets `[start, end)` into the caption
/// and the regions it refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedSpan {
    pub start: usize,
    pub end: usize,
    pub regions: Vec<Region>,
}

impl GroundedSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedCaption {
    pub caption: String,
    pub spans: Vec<GroundedSpan>,
}

/// Two spans conflict when they overlap or one contains the other.
pub fn spans_conflict(a: &GroundedSpan, b: &GroundedSpan) -> bool {
    let overlap = a.start < b.end && b.start < a.end;
    let a_in_b = b.start <= a.start && a.end <= b.end;
    let b_in_a = a.start <= b.start && b.end <= a.end;
    overlap || a_in_b || b_in_a
}

/// Greedy selection of pairwise non-conflicting spans.
///
/// Candidates are visited by region count (descending), span length
/// (descending), start offset (ascending) and input index; each is kept iff
/// it conflicts with no span kept before it. Spans without regions are
/// never kept. Returns kept indices in caption order.
pub fn select_spans(spans: &[GroundedSpan]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..spans.len()).filter(|&i| !spans[i].regions.is_empty()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&spans[a], &spans[b]);
        sb.regions
            .len()
            .cmp(&sa.regions.len())
            .then(sb.len().cmp(&sa.len()))
            .then(sa.start.cmp(&sb.start))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| !spans_conflict(&spans[k], &spans[i])) {
            kept.push(i);
        }
    }
    kept.sort_by_key(|&i| (spans[i].start, spans[i].end));
    kept
}

/// Flattens a grounded caption into markup, keeping the greedy selection of
/// [`select_spans`]. Phrases that lose are demoted to plain text: their
/// words stay in the caption and their regions are discarded.
pub fn denest_grit(c: &GroundedCaption) -> Result<Vec<MarkupNode>> {
    // char offset -> byte offset
    let mut bytes: Vec<usize> = c.caption.char_indices().map(|(b, _)| b).collect();
    bytes.push(c.caption.len());
    let n_chars = bytes.len() - 1;
    for (index, s) in c.spans.iter().enumerate() {
        if s.start > s.end || s.end > n_chars {
            return Err(FilterError::InvalidSpan { index, start: s.start, end: s.end, len: n_chars });
        }
    }

    let mut nodes = Vec::new();
    let mut cursor = 0;
    for i in select_spans(&c.spans) {
        let s = &c.spans[i];
        if s.start > cursor {
            nodes.push(MarkupNode::Text(c.caption[bytes[cursor]..bytes[s.start]].to_string()));
        }
        nodes.push(MarkupNode::Ref {
            content: c.caption[bytes[s.start]..bytes[s.end]].to_string(),
            regions: s.regions.clone(),
        });
        cursor = s.end;
    }
    if cursor < n_chars {
        nodes.push(MarkupNode::Text(c.caption[bytes[cursor]..].to_string()));
    }
    crate::markup::validate_nodes(&nodes)?;
    Ok(nodes)
}
