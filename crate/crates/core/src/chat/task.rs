use serde::{Deserialize, Serialize};

use super::{AnnotatedText, ChatError, Result, Segment};
use crate::markup::{emit_markup, parse_markup, MarkupNode, Region, REF_END, REF_START};

pub const EOS: &str = "<eos>";

/// The multi-task pretraining sample formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Caption,
    Vqa,
    OcrVqa,
    CaptionGrounded,
    RefGrounding,
    GroundedCaption,
    Ocr,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Caption => "caption",
            Task::Vqa => "vqa",
            Task::OcrVqa => "ocr_vqa",
            Task::CaptionGrounded => "caption_grounded",
            Task::RefGrounding => "ref_grounding",
            Task::GroundedCaption => "grounded_caption",
            Task::Ocr => "ocr",
        }
    }
}

/// Template slots. Which ones are required depends on the task:
///
/// | task               | slots                                           |
/// |--------------------|-------------------------------------------------|
/// | `caption`          | `image`, `caption`                              |
/// | `vqa`, `ocr_vqa`   | `image`, `question`, `answer`                   |
/// | `caption_grounded` | `image`, `caption` (grounding markup)           |
/// | `ref_grounding`    | `image`, `expression`, `regions`                |
/// | `grounded_caption` | `image`, `prefix` (grounding markup), `caption` |
/// | `ocr`              | `image`, `caption` (grounding markup)           |
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskFields {
    pub image: Option<String>,
    pub caption: Option<String>,
    pub question: Option<String>,
    pub answer: Option<String>,
    pub expression: Option<String>,
    pub regions: Option<Vec<Region>>,
    pub prefix: Option<String>,
}

fn slot<'a>(task: Task, field: &'static str, v: &'a Option<String>) -> Result<&'a str> {
    v.as_deref().ok_or(ChatError::MissingField { task: task.as_str(), field })
}

fn markup(s: &str) -> Result<String> {
    Ok(emit_markup(&parse_markup(s)?))
}

/// Renders one multi-task sample. The prompt is unsupervised; the target
/// and the closing `<eos>` are supervised.
pub fn build_task_sample(task: Task, f: &TaskFields) -> Result<AnnotatedText> {
    let image = slot(task, "image", &f.image)?;
    let mut prompt = Vec::new();
    let target: String = match task {
        Task::Caption => {
            prompt.push("Generate the caption in English: ".to_string());
            slot(task, "caption", &f.caption)?.to_string()
        }
        Task::Vqa | Task::OcrVqa => {
            let q = slot(task, "question", &f.question)?;
            prompt.push(format!(" {q} Answer: "));
            slot(task, "answer", &f.answer)?.to_string()
        }
        Task::CaptionGrounded => {
            prompt.push("Generate the caption in English with grounding: ".to_string());
            markup(slot(task, "caption", &f.caption)?)?
        }
        Task::RefGrounding => {
            let expr = slot(task, "expression", &f.expression)?;
            let regions = f
                .regions
                .as_deref()
                .ok_or(ChatError::MissingField { task: task.as_str(), field: "regions" })?;
            MarkupNode::Ref { content: expr.to_string(), regions: regions.to_vec() }.validate()?;
            prompt.push(format!("{REF_START}{expr}{REF_END}"));
            regions.iter().map(|r| r.to_string()).collect()
        }
        Task::GroundedCaption => {
            prompt.push(markup(slot(task, "prefix", &f.prefix)?)?);
            slot(task, "caption", &f.caption)?.to_string()
        }
        Task::Ocr => {
            prompt.push("OCR with grounding: ".to_string());
            markup(slot(task, "caption", &f.caption)?)?
        }
    };

    let mut out = AnnotatedText::default();
    out.push(Segment::image(image));
    for p in prompt {
        out.push(Segment::prompt(p));
    }
    out.push(Segment::target(target));
    out.push(Segment::target(EOS));
    Ok(out)
}
