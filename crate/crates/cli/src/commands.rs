//! One function per subcommand. Each returns the report it would print.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use vlcorpus::chat::{
    build_chatml, build_task_sample, project_mask, AnnotatedText, ChatError, ChatTurn, ImagePlacement,
    MockTokenizer, Role, Span, Task, TaskFields, Tokenizer,
};
use vlcorpus::filters::{
    check_special_tags, filter_document_text, screen_pair, CorpusRecord, DocumentKind, FilterVerdict, RuleId,
};
use vlcorpus::markup::parse_markup;
use vlcorpus::packer::{pack as pack_samples, utilization_report, PackedSequence, Sample, UtilizationReport};
use vlcorpus::resampler::{grad_check as check_gradients, overfit_demo, DemoConfig, DemoReport, GradCheckReport, ResamplerConfig};
use vlcorpus::schedules::{lr_at, stage_preset, Stage};

use crate::{map_lines, required, CliError, Location, Output, PipelineConfig, Result, RunReport, TokenizerChoice};

/// What `clean` treats each record as.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CleanKind {
    /// An image-text pair, screened by rules R1 to R8 and the special-tag check.
    Pair,
    Pdf,
    Html,
}

impl FromStr for CleanKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pair" => Ok(CleanKind::Pair),
            "pdf" => Ok(CleanKind::Pdf),
            "html" => Ok(CleanKind::Html),
            other => Err(format!("unknown kind {other:?} (expected pair, pdf or html)")),
        }
    }
}

#[derive(Serialize)]
struct VerdictLine<'a> {
    id: &'a str,
    #[serde(flatten)]
    verdict: &'a FilterVerdict,
}

fn clean_record(line: &str, kind: CleanKind, cfg: &PipelineConfig) -> std::result::Result<(CorpusRecord, FilterVerdict), String> {
    let mut r: CorpusRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let verdict = match kind {
        CleanKind::Pair => {
            let screened = screen_pair(&r, &cfg.filters).map_err(|e| e.to_string())?;
            let mut verdict = screened.verdict;
            if verdict.is_keep() && cfg.filters.enabled(RuleId::TSpecialTag) {
                verdict = check_special_tags(&r, &cfg.filters);
            }
            if verdict.is_keep() {
                r.text = screened.cleaned_text;
            }
            verdict
        }
        CleanKind::Pdf => filter_document_text(&r, DocumentKind::Pdf, &cfg.filters),
        CleanKind::Html => filter_document_text(&r, DocumentKind::Html, &cfg.filters),
    };
    Ok((r, verdict))
}

/// Filters corpus records. Kept records go to the output (pairs with their
/// cleaned text); every parsed record gets a line in `verdicts` if given.
pub fn clean(cfg: &PipelineConfig, kind: CleanKind, verdicts: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    let mut out = Output::create(required(&cfg.output, "output")?)?;
    let mut verdict_out = verdicts.map(Output::create).transpose()?;
    let mut report = RunReport::new("clean");
    let mut ids = HashSet::new();
    map_lines(
        cfg,
        |_, line| clean_record(line, kind, cfg),
        |at, res| {
            let (r, verdict) = match res {
                Ok(v) => v,
                Err(e) => {
                    report.error(at, e);
                    return Ok(());
                }
            };
            if !ids.insert(r.id.clone()) {
                report.error(at, format!("duplicate id {:?}", r.id));
                return Ok(());
            }
            if let Some(v) = verdict_out.as_mut() {
                v.json_line(&VerdictLine { id: &r.id, verdict: &verdict })?;
            }
            match verdict.rule_id {
                None => {
                    report.keep();
                    out.json_line(&r)?;
                }
                Some(rule) => report.drop(rule.as_str()),
            }
            Ok(())
        },
    )?;
    out.finish()?;
    if let Some(v) = verdict_out {
        v.finish()?;
    }
    Ok(report)
}

/// One training record with token ids and loss mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuiltRecord {
    pub id: String,
    pub task: String,
    pub text: String,
    pub spans: Vec<Span>,
    pub images: Vec<ImagePlacement>,
    pub token_ids: Vec<u32>,
    pub token_mask: Vec<bool>,
    /// Tokens outside the `<img>...</img>` placeholders.
    pub token_len: usize,
    pub n_images: usize,
}

fn tokenizer(choice: TokenizerChoice) -> impl Tokenizer + Sync {
    match choice {
        TokenizerChoice::Mock => MockTokenizer,
    }
}

fn finish_record(id: String, task: &str, a: AnnotatedText, tok: &impl Tokenizer) -> std::result::Result<BuiltRecord, ChatError> {
    let m = project_mask(&a, tok)?;
    let in_image = |start: usize| a.images.iter().any(|im| im.position <= start && start < im.position + im.len);
    let token_len = tok.encode(&a.text, &a.boundaries()).iter().filter(|t| !in_image(t.start)).count();
    Ok(BuiltRecord {
        id,
        task: task.to_string(),
        n_images: a.images.len(),
        text: a.text,
        spans: a.spans,
        images: a.images,
        token_ids: m.token_ids,
        token_mask: m.token_mask,
        token_len,
    })
}

fn write_built(
    cfg: &PipelineConfig,
    command: &str,
    build: impl Fn(&str) -> std::result::Result<BuiltRecord, String> + Sync,
) -> Result<RunReport> {
    cfg.validate()?;
    let mut out = Output::create(required(&cfg.output, "output")?)?;
    let mut report = RunReport::new(command);
    let mut ids = HashSet::new();
    map_lines(
        cfg,
        |_, line| build(line),
        |at, res| {
            match res {
                Ok(rec) if !ids.insert(rec.id.clone()) => report.error(at, format!("duplicate id {:?}", rec.id)),
                Ok(rec) => {
                    report.keep();
                    out.json_line(&rec)?;
                }
                Err(e) => report.error(at, e),
            }
            Ok(())
        },
    )?;
    out.finish()?;
    Ok(report)
}

#[derive(Deserialize)]
struct TaskLine {
    id: String,
    task: Task,
    #[serde(flatten)]
    fields: TaskFields,
}

/// Renders multi-task samples (`{id, task, ...template slots}` per line).
pub fn build_task(cfg: &PipelineConfig) -> Result<RunReport> {
    let tok = tokenizer(cfg.tokenizer);
    write_built(cfg, "build-task", |line| {
        let t: TaskLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let a = build_task_sample(t.task, &t.fields).map_err(|e| e.to_string())?;
        finish_record(t.id, t.task.as_str(), a, &tok).map_err(|e| e.to_string())
    })
}

#[derive(Deserialize)]
struct TurnLine {
    role: Role,
    content: String,
    #[serde(default)]
    images: Vec<String>,
}

#[derive(Deserialize)]
struct DialogueLine {
    id: String,
    turns: Vec<TurnLine>,
}

/// Renders ChatML dialogues (`{id, turns: [{role, content, images}]}` per line).
pub fn build_chat(cfg: &PipelineConfig) -> Result<RunReport> {
    let tok = tokenizer(cfg.tokenizer);
    write_built(cfg, "build-chat", |line| {
        let d: DialogueLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let turns: Vec<ChatTurn> = d.turns.into_iter().map(|t| ChatTurn::new(t.role, &t.content, t.images)).collect();
        let a = build_chatml(&turns).map_err(|e| e.to_string())?;
        finish_record(d.id, "chat", a, &tok).map_err(|e| e.to_string())
    })
}

#[derive(Deserialize)]
struct SampleLine {
    id: String,
    task: String,
    token_len: usize,
    #[serde(default)]
    n_images: usize,
}

/// Packs samples into sequences. Lines may be full build records; only
/// `id`, `task`, `token_len` and `n_images` are read.
pub fn pack(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut report = RunReport::new("pack");
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    map_lines(
        cfg,
        |_, line| {
            let s: SampleLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
            Sample::new(s.id, s.task, s.token_len, s.n_images).map_err(|e| e.to_string())
        },
        |at, res| {
            match res {
                Ok(s) if !ids.insert(s.id.clone()) => report.error(at, format!("duplicate id {:?}", s.id)),
                Ok(s) => samples.push(s),
                Err(e) => report.error(at, e),
            }
            Ok(())
        },
    )?;

    let packing = pack_samples(&samples, &cfg.packer);
    let mut out = Output::create(required(&cfg.output, "output")?)?;
    for seq in &packing.sequences {
        out.json_line(seq)?;
    }
    out.finish()?;
    for _ in &packing.dropped {
        report.drop("oversize");
    }
    for _ in 0..samples.len() - packing.dropped.len() {
        report.keep();
    }
    let util = utilization_report(&packing.sequences, cfg.packer.max_len);
    report.sequences_out = Some(util.sequences as u64);
    report.mean_fill = util.mean_fill;
    Ok(report)
}

/// Fill statistics of packed sequences; malformed lines count as errors.
pub fn stats(cfg: &PipelineConfig) -> Result<(UtilizationReport, RunReport)> {
    cfg.validate()?;
    let mut report = RunReport::new("stats");
    let mut sequences: Vec<PackedSequence> = Vec::new();
    map_lines(
        cfg,
        |_, line| serde_json::from_str::<PackedSequence>(line).map_err(|e| e.to_string()),
        |at, res| {
            match res {
                Ok(s) => {
                    report.keep();
                    sequences.push(s);
                }
                Err(e) => report.error(at, e),
            }
            Ok(())
        },
    )?;
    let util = utilization_report(&sequences, cfg.packer.max_len);
    report.sequences_out = Some(util.sequences as u64);
    report.mean_fill = util.mean_fill;
    Ok((util, report))
}

#[derive(Serialize)]
struct MarkupCheck {
    line: usize,
    valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Parses every line as grounding markup. Invalid lines are errors; with an
/// output path each line also gets a `{line, valid, error}` record.
pub fn check_markup(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut out = cfg.output.as_deref().map(Output::create).transpose()?;
    let mut report = RunReport::new("check-markup");
    map_lines(
        cfg,
        |_, line| parse_markup(line).err().map(|e| e.to_string()),
        |at: &Location, err| {
            match &err {
                None => report.keep(),
                Some(e) => report.error(at, e),
            }
            if let Some(o) = out.as_mut() {
                o.json_line(&MarkupCheck { line: at.line, valid: err.is_none(), error: err })?;
            }
            Ok(())
        },
    )?;
    if let Some(o) = out {
        o.finish()?;
    }
    Ok(report)
}

/// `step,lr` rows for a stage preset, every `every` steps plus the last one.
pub fn lr_curve(stage: Stage, every: u64) -> Result<String> {
    if every == 0 {
        return Err(CliError::Config("--every must be at least 1".into()));
    }
    let c = stage_preset(stage).schedule();
    let mut csv = String::from("step,lr\n");
    let steps = (0..=c.total_steps).step_by(every as usize);
    let last = (c.total_steps % every != 0).then_some(c.total_steps);
    for step in steps.chain(last) {
        let lr = lr_at(&c, step).expect("step within schedule");
        csv.push_str(&format!("{step},{lr:e}\n"));
    }
    Ok(csv)
}

/// Finite-difference checks on `d=16, n_q=4`, 3×3 configs, one per seed.
pub fn grad_check(seeds: &[u64], n_heads: usize) -> Result<Vec<(u64, GradCheckReport)>> {
    seeds
        .iter()
        .map(|&seed| {
            let cfg = ResamplerConfig { d_model: 16, n_queries: 4, n_heads, grid_h: 3, grid_w: 3, seed };
            check_gradients(&cfg).map(|r| (seed, r)).map_err(|e| CliError::Config(e.to_string()))
        })
        .collect()
}

pub fn demo_resampler(cfg: &DemoConfig) -> Result<DemoReport> {
    overfit_demo(cfg).map_err(|e| CliError::Config(e.to_string()))
}
