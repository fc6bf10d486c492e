//! Grounding markup: normalized region coordinates and the tag protocol
//! that binds text spans to image regions.
//!
//! Regions live on an integer grid covering `[0, 1000)` in both axes. A box
//! is written `<box>(x1,y1),(x2,y2)</box>`, a quadrilateral
//! `<quad>(x1,y1), (x2,y2), (x3,y3), (x4,y4)</quad>`, and the phrase a region
//! belongs to is wrapped in `<ref>...</ref>` immediately before its regions.
//!
//! ```
//! use vlcorpus::markup::{emit_markup, parse_markup, GridBox, MarkupNode, Region};
//!
//! let nodes = vec![
//!     MarkupNode::Text("Beautiful shot of ".into()),
//!     MarkupNode::Ref {
//!         content: "bees".into(),
//!         regions: vec![Region::Box(GridBox::new(661, 612, 833, 812).unwrap())],
//!     },
//! ];
//! let s = emit_markup(&nodes);
//! assert_eq!(s, "Beautiful shot of <ref>bees</ref><box>(661,612),(833,812)</box>");
//! assert_eq!(parse_markup(&s).unwrap(), nodes);
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const IMG_START: &str = "<img>";
pub const IMG_END: &str = "</img>";
pub const BOX_START: &str = "<box>";
pub const BOX_END: &str = "</box>";
pub const REF_START: &str = "<ref>";
pub const REF_END: &str = "</ref>";
pub const QUAD_START: &str = "<quad>";
pub const QUAD_END: &str = "</quad>";

/// Every tag literal recognised by the parser.
pub const TAGS: [&str; 8] = [
    IMG_START, IMG_END, BOX_START, BOX_END, REF_START, REF_END, QUAD_START, QUAD_END,
];

/// Number of cells per axis of the normalized grid.
pub const GRID_SIZE: u32 = 1000;
/// Largest valid grid coordinate.
pub const GRID_MAX: u16 = 999;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkupError {
    #[error("image extent must be positive, got {width}x{height}")]
    InvalidImageExtent { width: u32, height: u32 },
    #[error("coordinate {value} outside [0, {limit}]")]
    CoordinateOutOfRange { value: String, limit: String },
    #[error("box corners are not ordered: ({x1},{y1}),({x2},{y2})")]
    InvertedBox { x1: String, y1: String, x2: String, y2: String },
    #[error("<ref> at byte {offset} is not followed by a region tag")]
    UnboundRef { offset: usize },
    #[error("region tag at byte {offset} has no preceding </ref>")]
    OrphanRegion { offset: usize },
    #[error("malformed region at byte {offset}: {reason}")]
    MalformedRegion { offset: usize, reason: String },
    #[error("reference mixes <box> and <quad> regions at byte {offset}")]
    MixedRegions { offset: usize },
    #[error("unbalanced tags at byte {offset}: {reason}")]
    UnbalancedTags { offset: usize, reason: String },
    #[error("text contains reserved tag {tag:?}")]
    TagInText { tag: &'static str },
    #[error("reference {content:?} has no regions")]
    EmptyRef { content: String },
}

pub type Result<T> = std::result::Result<T, MarkupError>;

/// A box in pixel space, together with the image it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub width: u32,
    pub height: u32,
}

impl PixelBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, width: u32, height: u32) -> Result<Self> {
        let b = Self { x1, y1, x2, y2, width, height };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(MarkupError::InvalidImageExtent {
                width: self.width,
                height: self.height,
            });
        }
        for (v, extent) in [
            (self.x1, self.width),
            (self.y1, self.height),
            (self.x2, self.width),
            (self.y2, self.height),
        ] {
            if !v.is_finite() || v < 0.0 || v > extent as f64 {
                return Err(MarkupError::CoordinateOutOfRange {
                    value: v.to_string(),
                    limit: extent.to_string(),
                });
            }
        }
        if self.x1 > self.x2 || self.y1 > self.y2 {
            return Err(MarkupError::InvertedBox {
                x1: self.x1.to_string(),
                y1: self.y1.to_string(),
                x2: self.x2.to_string(),
                y2: self.y2.to_string(),
            });
        }
        Ok(())
    }
}

/// A point on the normalized grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GridPoint {
    pub x: u16,
    pub y: u16,
}

impl GridPoint {
    pub fn new(x: u16, y: u16) -> Result<Self> {
        check_grid(x)?;
        check_grid(y)?;
        Ok(Self { x, y })
    }
}

fn check_grid(v: u16) -> Result<()> {
    if v > GRID_MAX {
        return Err(MarkupError::CoordinateOutOfRange {
            value: v.to_string(),
            limit: GRID_MAX.to_string(),
        });
    }
    Ok(())
}

/// An axis-aligned box on the normalized grid (top-left, bottom-right).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct GridBox {
    pub x1: u16,
    pub y1: u16,
    pub x2: u16,
    pub y2: u16,
}

impl GridBox {
    pub fn new(x1: u16, y1: u16, x2: u16, y2: u16) -> Result<Self> {
        for v in [x1, y1, x2, y2] {
            check_grid(v)?;
        }
        if x1 > x2 || y1 > y2 {
            return Err(MarkupError::InvertedBox {
                x1: x1.to_string(),
                y1: y1.to_string(),
                x2: x2.to_string(),
                y2: y2.to_string(),
            });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// True if `other` lies inside `self` (borders inclusive).
    pub fn contains(&self, other: &GridBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }
}

#[derive(Deserialize)]
struct RawPoint {
    x: u16,
    y: u16,
}

impl TryFrom<RawPoint> for GridPoint {
    type Error = MarkupError;

    fn try_from(r: RawPoint) -> Result<Self> {
        GridPoint::new(r.x, r.y)
    }
}

#[derive(Deserialize)]
struct RawBox {
    x1: u16,
    y1: u16,
    x2: u16,
    y2: u16,
}

impl TryFrom<RawBox> for GridBox {
    type Error = MarkupError;

    fn try_from(r: RawBox) -> Result<Self> {
        GridBox::new(r.x1, r.y1, r.x2, r.y2)
    }
}

/// A quadrilateral on the normalized grid, points clockwise from top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuadGrid {
    pub points: [GridPoint; 4],
}

impl QuadGrid {
    pub fn new(points: [(u16, u16); 4]) -> Result<Self> {
        let mut out = [GridPoint { x: 0, y: 0 }; 4];
        for (slot, (x, y)) in out.iter_mut().zip(points) {
            *slot = GridPoint::new(x, y)?;
        }
        Ok(Self { points: out })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    Box(GridBox),
    Quad(QuadGrid),
}

impl Region {
    fn is_box(&self) -> bool {
        matches!(self, Region::Box(_))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Box(b) => write!(
                f,
                "{BOX_START}({},{}),({},{}){BOX_END}",
                b.x1, b.y1, b.x2, b.y2
            ),
            Region::Quad(q) => {
                f.write_str(QUAD_START)?;
                for (i, p) in q.points.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "({},{})", p.x, p.y)?;
                }
                f.write_str(QUAD_END)
            }
        }
    }
}

/// One node of grounded text.
///
/// `Image` holds the reference between `<img>` and `</img>`; it lets whole
/// training samples pass through the parser, not only grounded captions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MarkupNode {
    Text(String),
    Image(String),
    Ref { content: String, regions: Vec<Region> },
}

impl MarkupNode {
    /// Checks the node invariants: no tag literals inside text payloads,
    /// and a non-empty, homogeneous region list on references.
    pub fn validate(&self) -> Result<()> {
        match self {
            MarkupNode::Text(s) | MarkupNode::Image(s) => reject_tags(s),
            MarkupNode::Ref { content, regions } => {
                reject_tags(content)?;
                let Some(first) = regions.first() else {
                    return Err(MarkupError::EmptyRef { content: content.clone() });
                };
                if regions.iter().any(|r| r.is_box() != first.is_box()) {
                    return Err(MarkupError::MixedRegions { offset: 0 });
                }
                Ok(())
            }
        }
    }
}

fn reject_tags(s: &str) -> Result<()> {
    match TAGS.iter().find(|t| s.contains(**t)) {
        Some(tag) => Err(MarkupError::TagInText { tag }),
        None => Ok(()),
    }
}

/// Validates every node of a sequence.
pub fn validate_nodes(nodes: &[MarkupNode]) -> Result<()> {
    nodes.iter().try_for_each(MarkupNode::validate)
}

/// Maps a pixel box onto the grid: `floor(coord / extent * 1000)`, clamped
/// to 999 so the right and bottom image edges stay on the grid.
pub fn normalize_box(b: &PixelBox) -> Result<GridBox> {
    b.validate()?;
    let cell = |v: f64, extent: u32| -> u16 {
        let g = (v * GRID_SIZE as f64 / extent as f64).floor();
        (g as u16).min(GRID_MAX)
    };
    Ok(GridBox {
        x1: cell(b.x1, b.width),
        y1: cell(b.y1, b.height),
        x2: cell(b.x2, b.width),
        y2: cell(b.y2, b.height),
    })
}

/// Maps grid coordinates back to the pixel-space centre of each grid cell.
pub fn denormalize_box(g: &GridBox, width: u32, height: u32) -> Result<PixelBox> {
    if width == 0 || height == 0 {
        return Err(MarkupError::InvalidImageExtent { width, height });
    }
    let center = |v: u16, extent: u32| (v as f64 + 0.5) / GRID_SIZE as f64 * extent as f64;
    Ok(PixelBox {
        x1: center(g.x1, width),
        y1: center(g.y1, height),
        x2: center(g.x2, width),
        y2: center(g.y2, height),
        width,
        height,
    })
}

/// Serializes nodes to their canonical string form.
pub fn emit_markup(nodes: &[MarkupNode]) -> String {
    let mut out = String::new();
    for node in nodes {
        emit_node(node, &mut out);
    }
    out
}

pub(crate) fn emit_node(node: &MarkupNode, out: &mut String) {
    use std::fmt::Write;
    match node {
        MarkupNode::Text(s) => out.push_str(s),
        MarkupNode::Image(s) => {
            out.push_str(IMG_START);
            out.push_str(s);
            out.push_str(IMG_END);
        }
        MarkupNode::Ref { content, regions } => {
            out.push_str(REF_START);
            out.push_str(content);
            out.push_str(REF_END);
            for r in regions {
                let _ = write!(out, "{r}");
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Accept region tags with no preceding `</ref>`, yielding a reference
    /// with empty content.
    pub lenient_orphans: bool,
}

/// Parses grounded text with strict options.
pub fn parse_markup(s: &str) -> Result<Vec<MarkupNode>> {
    parse_markup_with(s, ParseOptions::default())
}

pub fn parse_markup_with(s: &str, opts: ParseOptions) -> Result<Vec<MarkupNode>> {
    Parser { src: s, pos: 0, opts }.run()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    opts: ParseOptions,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn tag_here(&self) -> Option<&'static str> {
        let rest = self.rest();
        TAGS.iter().copied().find(|t| rest.starts_with(t))
    }

    /// Byte offset of the next tag at or after the cursor.
    fn next_tag(&self) -> Option<(usize, &'static str)> {
        let rest = self.rest();
        rest.match_indices('<').find_map(|(i, _)| {
            TAGS.iter()
                .copied()
                .find(|t| rest[i..].starts_with(t))
                .map(|t| (self.pos + i, t))
        })
    }

    fn run(mut self) -> Result<Vec<MarkupNode>> {
        let mut nodes: Vec<MarkupNode> = Vec::new();
        let mut text = String::new();
        let flush = |text: &mut String, nodes: &mut Vec<MarkupNode>| {
            if !text.is_empty() {
                nodes.push(MarkupNode::Text(std::mem::take(text)));
            }
        };
        while self.pos < self.src.len() {
            let Some((at, tag)) = self.next_tag() else {
                text.push_str(self.rest());
                self.pos = self.src.len();
                break;
            };
            text.push_str(&self.src[self.pos..at]);
            self.pos = at;
            match tag {
                IMG_START => {
                    flush(&mut text, &mut nodes);
                    let inner = self.enclosed(IMG_START, IMG_END)?;
                    nodes.push(MarkupNode::Image(inner.to_string()));
                }
                REF_START => {
                    flush(&mut text, &mut nodes);
                    let start = self.pos;
                    let content = self.enclosed(REF_START, REF_END)?.to_string();
                    let regions = self.regions()?;
                    if regions.is_empty() {
                        return Err(MarkupError::UnboundRef { offset: start });
                    }
                    nodes.push(MarkupNode::Ref { content, regions });
                }
                BOX_START | QUAD_START => {
                    if !self.opts.lenient_orphans {
                        return Err(MarkupError::OrphanRegion { offset: at });
                    }
                    flush(&mut text, &mut nodes);
                    let regions = self.regions()?;
                    nodes.push(MarkupNode::Ref { content: String::new(), regions });
                }
                closing => {
                    return Err(MarkupError::UnbalancedTags {
                        offset: at,
                        reason: format!("unexpected {closing}"),
                    });
                }
            }
        }
        flush(&mut text, &mut nodes);
        Ok(nodes)
    }

    /// Consumes `open ... close` where the payload holds no tags.
    fn enclosed(&mut self, open: &str, close: &'static str) -> Result<&'a str> {
        let start = self.pos;
        self.pos += open.len();
        match self.next_tag() {
            Some((at, tag)) if tag == close => {
                let inner = &self.src[self.pos..at];
                self.pos = at + close.len();
                Ok(inner)
            }
            Some((at, tag)) => Err(MarkupError::UnbalancedTags {
                offset: at,
                reason: format!("expected {close}, found {tag}"),
            }),
            None => Err(MarkupError::UnbalancedTags {
                offset: start,
                reason: format!("{open} is never closed"),
            }),
        }
    }

    /// Consumes the run of region tags at the cursor.
    fn regions(&mut self) -> Result<Vec<Region>> {
        let mut out: Vec<Region> = Vec::new();
        while let Some(tag @ (BOX_START | QUAD_START)) = self.tag_here() {
            let at = self.pos;
            let (close, want) = if tag == BOX_START { (BOX_END, 2) } else { (QUAD_END, 4) };
            let body = self.enclosed(tag, close)?;
            let points = parse_points(body, at)?;
            if points.len() != want {
                return Err(MarkupError::MalformedRegion {
                    offset: at,
                    reason: format!("expected {want} points, found {}", points.len()),
                });
            }
            let region = if want == 2 {
                let b = GridBox::new(points[0].0, points[0].1, points[1].0, points[1].1)
                    .map_err(|e| match e {
                        MarkupError::InvertedBox { .. } => MarkupError::MalformedRegion {
                            offset: at,
                            reason: e.to_string(),
                        },
                        other => other,
                    })?;
                Region::Box(b)
            } else {
                Region::Quad(QuadGrid::new([points[0], points[1], points[2], points[3]])?)
            };
            if out.first().is_some_and(|f| f.is_box() != region.is_box()) {
                return Err(MarkupError::MixedRegions { offset: at });
            }
            out.push(region);
        }
        Ok(out)
    }
}

/// Parses `(x,y), (x,y), ...` with optional whitespace after each comma.
fn parse_points(body: &str, offset: usize) -> Result<Vec<(u16, u16)>> {
    let malformed = |reason: &str| MarkupError::MalformedRegion {
        offset,
        reason: reason.to_string(),
    };
    let mut points = Vec::new();
    let mut rest = body;
    loop {
        rest = rest
            .strip_prefix('(')
            .ok_or_else(|| malformed("expected '('"))?;
        let (x, r) = parse_coord(rest, offset)?;
        rest = r.strip_prefix(',').ok_or_else(|| malformed("expected ','"))?;
        rest = rest.trim_start();
        let (y, r) = parse_coord(rest, offset)?;
        rest = r.strip_prefix(')').ok_or_else(|| malformed("expected ')'"))?;
        points.push((x, y));
        if rest.is_empty() {
            return Ok(points);
        }
        rest = rest.strip_prefix(',').ok_or_else(|| malformed("expected ','"))?;
        rest = rest.trim_start();
    }
}

fn parse_coord(s: &str, offset: usize) -> Result<(u16, &str)> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let digits = body.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return Err(MarkupError::MalformedRegion {
            offset,
            reason: "expected an integer coordinate".into(),
        });
    }
    let lexeme = &s[..digits + neg as usize];
    let out_of_range = || MarkupError::CoordinateOutOfRange {
        value: lexeme.to_string(),
        limit: GRID_MAX.to_string(),
    };
    if neg {
        return Err(out_of_range());
    }
    let value: u32 = body[..digits].parse().map_err(|_| out_of_range())?;
    if value > GRID_MAX as u32 {
        return Err(out_of_range());
    }
    Ok((value as u16, &body[digits..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deserialization_validates_coordinates() {
        let ok: Region = serde_json::from_str(r#"{"kind":"box","x1":1,"y1":2,"x2":3,"y2":4}"#).unwrap();
        assert_eq!(ok, Region::Box(GridBox::new(1, 2, 3, 4).unwrap()));
        for bad in [
            r#"{"kind":"box","x1":1,"y1":2,"x2":1000,"y2":4}"#,
            r#"{"kind":"box","x1":5,"y1":2,"x2":3,"y2":4}"#,
            r#"{"kind":"quad","points":[{"x":0,"y":0},{"x":1,"y":0},{"x":1,"y":1},{"x":0,"y":1000}]}"#,
        ] {
            assert!(serde_json::from_str::<Region>(bad).is_err(), "{bad}");
        }
    }

    fn bx(x1: u16, y1: u16, x2: u16, y2: u16) -> Region {
        Region::Box(GridBox::new(x1, y1, x2, y2).unwrap())
    }

    #[test]
    fn normalize_full_image_clamps_upper_edge() {
        let b = PixelBox::new(0.0, 0.0, 1000.0, 1000.0, 1000, 1000).unwrap();
        assert_eq!(normalize_box(&b).unwrap(), GridBox::new(0, 0, 999, 999).unwrap());
    }

    #[test]
    fn normalize_scaled_box() {
        let b = PixelBox::new(64.0, 48.0, 320.0, 240.0, 640, 480).unwrap();
        assert_eq!(normalize_box(&b).unwrap(), GridBox::new(100, 100, 500, 500).unwrap());
    }

    #[test]
    fn normalize_degenerate_box() {
        let b = PixelBox::new(10.0, 10.0, 10.0, 10.0, 100, 100).unwrap();
        assert_eq!(normalize_box(&b).unwrap(), GridBox::new(100, 100, 100, 100).unwrap());
    }

    #[test]
    fn normalize_errors() {
        let zero = PixelBox { x1: 0.0, y1: 0.0, x2: 1.0, y2: 1.0, width: 0, height: 5 };
        assert!(matches!(normalize_box(&zero), Err(MarkupError::InvalidImageExtent { .. })));
        let outside = PixelBox { x1: 0.0, y1: 0.0, x2: 11.0, y2: 1.0, width: 10, height: 10 };
        assert!(matches!(
            normalize_box(&outside),
            Err(MarkupError::CoordinateOutOfRange { .. })
        ));
        let neg = PixelBox { x1: -1.0, y1: 0.0, x2: 1.0, y2: 1.0, width: 10, height: 10 };
        assert!(matches!(normalize_box(&neg), Err(MarkupError::CoordinateOutOfRange { .. })));
    }

    #[test]
    fn denormalize_cell_centres() {
        let g = GridBox::new(0, 0, 999, 999).unwrap();
        let p = denormalize_box(&g, 1000, 1000).unwrap();
        assert_eq!((p.x1, p.y1, p.x2, p.y2), (0.5, 0.5, 999.5, 999.5));

        let g = GridBox::new(100, 100, 500, 500).unwrap();
        let p = denormalize_box(&g, 640, 480).unwrap();
        for (got, want) in [(p.x1, 64.32), (p.y1, 48.24), (p.x2, 320.32), (p.y2, 240.24)] {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!(matches!(
            denormalize_box(&g, 640, 0),
            Err(MarkupError::InvalidImageExtent { .. })
        ));
    }

    #[test]
    fn emit_quad_uses_spaced_points() {
        let q = QuadGrid::new([(568, 121), (625, 131), (624, 182), (567, 172)]).unwrap();
        let nodes = [MarkupNode::Ref {
            content: "It is managed".into(),
            regions: vec![Region::Quad(q)],
        }];
        assert_eq!(
            emit_markup(&nodes),
            "<ref>It is managed</ref><quad>(568,121), (625,131), (624,182), (567,172)</quad>"
        );
    }

    #[test]
    fn emit_plain_text_is_identity() {
        assert_eq!(emit_markup(&[MarkupNode::Text("hello".into())]), "hello");
    }

    #[test]
    fn parse_plain_text() {
        assert_eq!(
            parse_markup("no tags here").unwrap(),
            vec![MarkupNode::Text("no tags here".into())]
        );
        assert_eq!(parse_markup("").unwrap(), vec![]);
        assert_eq!(parse_markup("a < b").unwrap(), vec![MarkupNode::Text("a < b".into())]);
    }

    #[test]
    fn parse_tolerates_whitespace_after_commas() {
        let nodes = parse_markup("<ref>x</ref><box>( 1, 2),\t(3,  4)</box>");
        // whitespace before a coordinate is only accepted after a comma
        assert!(nodes.is_err());
        let nodes = parse_markup("<ref>x</ref><box>(1, 2),\t(3,  4)</box>").unwrap();
        assert_eq!(nodes, vec![MarkupNode::Ref { content: "x".into(), regions: vec![bx(1, 2, 3, 4)] }]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_markup("<ref>x</ref> tail"), Err(MarkupError::UnboundRef { .. })));
        assert!(matches!(
            parse_markup("a <box>(1,2),(3,4)</box>"),
            Err(MarkupError::OrphanRegion { offset: 2 })
        ));
        assert!(matches!(
            parse_markup("<ref>x</ref><box>(1,2)</box>"),
            Err(MarkupError::MalformedRegion { .. })
        ));
        assert!(matches!(
            parse_markup("<ref>x</ref><quad>(1,2),(3,4),(5,6)</quad>"),
            Err(MarkupError::MalformedRegion { .. })
        ));
        assert!(matches!(
            parse_markup("<ref>x</ref><box>(1,2),(3,a)</box>"),
            Err(MarkupError::MalformedRegion { .. })
        ));
        assert!(matches!(
            parse_markup("<ref>x</ref><box>(1,2),(1000,4)</box>"),
            Err(MarkupError::CoordinateOutOfRange { .. })
        ));
        assert!(matches!(
            parse_markup("<ref>x</ref><box>(-1,2),(10,4)</box>"),
            Err(MarkupError::CoordinateOutOfRange { .. })
        ));
        assert!(matches!(parse_markup("<ref>x"), Err(MarkupError::UnbalancedTags { .. })));
        assert!(matches!(parse_markup("x</ref>"), Err(MarkupError::UnbalancedTags { .. })));
        assert!(matches!(
            parse_markup("<ref>a<img>b</img></ref><box>(1,2),(3,4)</box>"),
            Err(MarkupError::UnbalancedTags { .. })
        ));
        assert!(matches!(
            parse_markup("<ref>x</ref><box>(1,2),(3,4)</box><quad>(1,2),(3,4),(5,6),(7,8)</quad>"),
            Err(MarkupError::MixedRegions { .. })
        ));
        assert!(matches!(
            parse_markup("<ref>x</ref><box>(5,2),(3,4)</box>"),
            Err(MarkupError::MalformedRegion { .. })
        ));
    }

    #[test]
    fn lenient_orphans_become_anonymous_refs() {
        let opts = ParseOptions { lenient_orphans: true };
        let nodes = parse_markup_with("a <box>(1,2),(3,4)</box>", opts).unwrap();
        assert_eq!(
            nodes,
            vec![
                MarkupNode::Text("a ".into()),
                MarkupNode::Ref { content: String::new(), regions: vec![bx(1, 2, 3, 4)] },
            ]
        );
    }

    #[test]
    fn validate_rejects_bad_nodes() {
        assert!(MarkupNode::Text("a<box>b".into()).validate().is_err());
        assert!(MarkupNode::Ref { content: "x".into(), regions: vec![] }.validate().is_err());
        let q = Region::Quad(QuadGrid::new([(0, 0); 4]).unwrap());
        assert!(MarkupNode::Ref { content: "x".into(), regions: vec![bx(0, 0, 1, 1), q] }
            .validate()
            .is_err());
        assert!(GridBox::new(0, 0, 1000, 1).is_err());
    }
}
