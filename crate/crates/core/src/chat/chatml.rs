use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{AnnotatedText, ChatError, Result, Segment};

pub const IM_START: &str = "<|im_start|>";
pub const IM_END: &str = "<|im_end|>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }

    fn other(self) -> Role {
        match self {
            Role::User => Role::Assistant,
            Role::Assistant => Role::User,
        }
    }
}

/// One dialogue turn. Text segments follow the role: assistant text is
/// supervised, user text is not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub segments: Vec<Segment>,
}

impl ChatTurn {
    /// A turn with its images placed before the text.
    pub fn new<I, S>(role: Role, content: &str, images: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let text = match role {
            Role::User => Segment::prompt(content),
            Role::Assistant => Segment::target(content),
        };
        let segments = images.into_iter().map(Segment::image).chain(std::iter::once(text)).collect();
        Self { role, segments }
    }
}

/// Renders a dialogue as ChatML:
///
/// ```text
/// <|im_start|>user
/// Picture 1: <img>a.jpg</img>question<|im_end|>
/// <|im_start|>assistant
/// answer<|im_end|>
/// ```
///
/// Each turn ends with a newline. Images are numbered across the whole
/// dialogue in order of first appearance; a repeated reference reuses its
/// number. Only assistant text and the assistant's `<|im_end|>` are
/// supervised.
pub fn build_chatml(turns: &[ChatTurn]) -> Result<AnnotatedText> {
    if turns.is_empty() {
        return Err(ChatError::EmptyDialogue);
    }
    let mut expected = Role::User;
    for (index, t) in turns.iter().enumerate() {
        if t.role != expected {
            return Err(ChatError::RoleOrderViolation { index, expected, found: t.role });
        }
        expected = expected.other();
    }

    let mut picture_ids: HashMap<&str, usize> = HashMap::new();
    let mut out = AnnotatedText::default();
    for t in turns {
        let assistant = t.role == Role::Assistant;
        out.push(Segment::prompt(IM_START));
        out.push(Segment::prompt(format!("{}\n", t.role.as_str())));
        for seg in &t.segments {
            match &seg.image_ref {
                Some(r) => {
                    let next = picture_ids.len() + 1;
                    let id = *picture_ids.entry(r.as_str()).or_insert(next);
                    out.push(Segment::prompt(format!("Picture {id}: ")));
                    out.push(Segment::image(r.clone()));
                }
                None => out.push(Segment {
                    text: seg.text.clone(),
                    supervised: assistant,
                    image_ref: None,
                }),
            }
        }
        out.push(Segment { text: IM_END.to_string(), supervised: assistant, image_ref: None });
        out.push(Segment::prompt("\n"));
    }
    Ok(out)
}
