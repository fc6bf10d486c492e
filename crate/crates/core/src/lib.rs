//! Data protocols and reference kernels for vision-language pretraining.
//!
//! - [`markup`]: grounding boxes and quadrilaterals on a `[0, 1000)` grid and
//!   the `<ref>`/`<box>`/`<quad>` tag protocol.
//! - [`filters`]: record-level cleaning of web image-text pairs, academic
//!   captions, grounded captions and extracted document text.
//! - [`chat`]: multi-task sample templates, ChatML dialogues and token-level
//!   loss masks.
//! - [`packer`]: same-task packing into fixed-length sequences.
//! - [`schedules`]: warmup + cosine learning rates, layer-wise decay and the
//!   three stage presets.
//! - [`resampler`]: a cross-attention adapter with learnable queries, its
//!   gradients, AdamW and a small training demo.

pub mod chat;
pub mod filters;
pub mod markup;
pub mod packer;
pub mod resampler;
pub mod schedules;

/// Book chapters, compiled as doctests so their snippets stay runnable.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/markup.md")]
    pub mod markup {}
    #[doc = include_str!("../../../book/src/filters.md")]
    pub mod filters {}
    #[doc = include_str!("../../../book/src/chat.md")]
    pub mod chat {}
    #[doc = include_str!("../../../book/src/packing.md")]
    pub mod packing {}
    #[doc = include_str!("../../../book/src/schedules.md")]
    pub mod schedules {}
    #[doc = include_str!("../../../book/src/resampler.md")]
    pub mod resampler {}
}
