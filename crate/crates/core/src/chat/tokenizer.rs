use serde::{Deserialize, Serialize};

use super::{AnnotatedText, ChatError, Result};

/// Literals that always encode to a single token.
pub const RESERVED: [&str; 11] = [
    "<img>",
    "</img>",
    "<box>",
    "</box>",
    "<ref>",
    "</ref>",
    "<quad>",
    "</quad>",
    "<|im_start|>",
    "<|im_end|>",
    "<eos>",
];

/// A token id with the byte range of the text it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub id: u32,
    pub start: usize,
    pub end: usize,
}

pub trait Tokenizer {
    /// Encodes `text`. Implementations that honour `boundaries` (sorted byte
    /// offsets) never emit a token spanning one of them.
    fn encode(&self, text: &str, boundaries: &[usize]) -> Vec<Token>;

    fn decode(&self, ids: &[u32]) -> Result<String>;
}

/// Byte-level tokenizer: ids `0..256` are raw bytes and ids `256..267` are
/// the [`RESERVED`] literals.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockTokenizer;

impl MockTokenizer {
    pub const VOCAB_SIZE: u32 = 256 + RESERVED.len() as u32;

    pub fn reserved_id(literal: &str) -> Option<u32> {
        RESERVED.iter().position(|r| *r == literal).map(|i| 256 + i as u32)
    }

    fn encode_piece(text: &str, offset: usize, out: &mut Vec<Token>) {
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let hit = RESERVED.iter().enumerate().find(|(_, r)| bytes[i..].starts_with(r.as_bytes()));
            let (id, len) = match hit {
                Some((k, r)) => (256 + k as u32, r.len()),
                None => (bytes[i] as u32, 1),
            };
            out.push(Token { id, start: offset + i, end: offset + i + len });
            i += len;
        }
    }
}

impl Tokenizer for MockTokenizer {
    fn encode(&self, text: &str, boundaries: &[usize]) -> Vec<Token> {
        let mut out = Vec::with_capacity(text.len());
        let mut start = 0;
        for &b in boundaries.iter().chain(std::iter::once(&text.len())) {
            if b > start && b <= text.len() {
                Self::encode_piece(&text[start..b], start, &mut out);
                start = b;
            }
        }
        out
    }

    fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut bytes = Vec::with_capacity(ids.len());
        for &id in ids {
            match id {
                0..=255 => bytes.push(id as u8),
                _ => {
                    let lit = RESERVED
                        .get((id - 256) as usize)
                        .ok_or_else(|| ChatError::TokenizerMismatch(format!("unknown id {id}")))?;
                    bytes.extend_from_slice(lit.as_bytes());
                }
            }
        }
        String::from_utf8(bytes).map_err(|e| ChatError::TokenizerMismatch(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedTokens {
    pub token_ids: Vec<u32>,
    pub token_mask: Vec<bool>,
}

impl MaskedTokens {
    pub fn supervised_count(&self) -> usize {
        self.token_mask.iter().filter(|&&m| m).count()
    }
}

/// Projects span supervision onto tokens: each token takes the flag of the
/// span containing it.
pub fn project_mask<T: Tokenizer + ?Sized>(a: &AnnotatedText, t: &T) -> Result<MaskedTokens> {
    let tokens = t.encode(&a.text, &a.boundaries());
    let mut token_ids = Vec::with_capacity(tokens.len());
    let mut token_mask = Vec::with_capacity(tokens.len());
    let mut span = 0;
    let mut cursor = 0;
    for (index, tok) in tokens.iter().enumerate() {
        if tok.start != cursor || tok.end <= tok.start {
            return Err(ChatError::TokenizerMismatch(format!(
                "token {index} covers [{}, {}) but the previous token ended at {cursor}",
                tok.start, tok.end
            )));
        }
        while span < a.spans.len() && a.spans[span].end <= tok.start {
            span += 1;
        }
        let s = a.spans.get(span).ok_or(ChatError::SpanAlignmentError {
            index,
            start: tok.start,
            end: tok.end,
        })?;
        if tok.end > s.end {
            return Err(ChatError::SpanAlignmentError { index, start: tok.start, end: tok.end });
        }
        token_ids.push(tok.id);
        token_mask.push(s.supervised);
        cursor = tok.end;
    }
    if cursor != a.text.len() {
        return Err(ChatError::TokenizerMismatch(format!(
            "tokens cover {cursor} of {} bytes",
            a.text.len()
        )));
    }
    if t.decode(&token_ids)? != a.text {
        return Err(ChatError::TokenizerMismatch("decode does not round-trip".into()));
    }
    Ok(MaskedTokens { token_ids, token_mask })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::Span;

    fn annotated(text: &str, spans: &[(usize, usize, bool)]) -> AnnotatedText {
        AnnotatedText {
            text: text.into(),
            spans: spans.iter().map(|&(start, end, supervised)| Span { start, end, supervised }).collect(),
            images: vec![],
        }
    }

    /// Ignores boundaries, so reserved literals may straddle spans.
    struct GreedyTokenizer;

    impl Tokenizer for GreedyTokenizer {
        fn encode(&self, text: &str, _: &[usize]) -> Vec<Token> {
            MockTokenizer.encode(text, &[])
        }
        fn decode(&self, ids: &[u32]) -> Result<String> {
            MockTokenizer.decode(ids)
        }
    }

    #[test]
    fn two_byte_mask() {
        let m = project_mask(&annotated("ab", &[(0, 1, false), (1, 2, true)]), &MockTokenizer).unwrap();
        assert_eq!(m.token_ids, vec![b'a' as u32, b'b' as u32]);
        assert_eq!(m.token_mask, vec![false, true]);
    }

    #[test]
    fn all_unsupervised() {
        let m = project_mask(&annotated("hello", &[(0, 5, false)]), &MockTokenizer).unwrap();
        assert!(m.token_mask.iter().all(|&b| !b));
    }

    #[test]
    fn reserved_literals_are_atomic() {
        let toks = MockTokenizer.encode("a<eos><|im_end|>", &[]);
        assert_eq!(toks.len(), 3);
        assert_eq!(toks[1].id, MockTokenizer::reserved_id("<eos>").unwrap());
        assert_eq!(toks[2].id, MockTokenizer::reserved_id("<|im_end|>").unwrap());
        assert_eq!(MockTokenizer::VOCAB_SIZE, 267);
    }

    #[test]
    fn boundaries_split_literals() {
        // "<eos>" straddles the boundary at 3, so it is encoded as bytes
        let a = annotated("x<eos>", &[(0, 3, false), (3, 6, true)]);
        let m = project_mask(&a, &MockTokenizer).unwrap();
        assert_eq!(m.token_ids.len(), 6);
        assert_eq!(m.token_mask, vec![false, false, false, true, true, true]);
        assert!(matches!(
            project_mask(&a, &GreedyTokenizer),
            Err(ChatError::SpanAlignmentError { index: 1, start: 1, end: 6 })
        ));
    }

    #[test]
    fn multibyte_text_round_trips() {
        let a = annotated("猫<eos>", &[(0, 3, false), (3, 8, true)]);
        let m = project_mask(&a, &MockTokenizer).unwrap();
        assert_eq!(m.token_mask, vec![false, false, false, true]);
        assert_eq!(MockTokenizer.decode(&m.token_ids).unwrap(), a.text);
    }

    #[test]
    fn decode_rejects_unknown_ids() {
        assert!(MockTokenizer.decode(&[300]).is_err());
    }
}
