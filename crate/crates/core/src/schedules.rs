//! Learning-rate schedules and the three training-stage presets.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("step {step} outside [0, {total}]")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("layer depth must be non-negative, got {0}")]
    InvalidDepth(i64),
    #[error("resolution {resolution} is not a multiple of stride {stride}")]
    InvalidResolution { resolution: u32, stride: u32 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

/// Linear warmup from zero to `peak_lr`, then cosine decay to `min_lr` at
/// `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl ScheduleConfig {
    pub fn new(peak_lr: f64, min_lr: f64, warmup_steps: u64, total_steps: u64) -> Result<Self, ScheduleError> {
        let c = Self { peak_lr, min_lr, warmup_steps, total_steps };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(0.0 < self.min_lr && self.min_lr <= self.peak_lr) {
            return Err(ScheduleError::InvalidSchedule(format!(
                "need 0 < min_lr ({}) <= peak_lr ({})",
                self.min_lr, self.peak_lr
            )));
        }
        if self.warmup_steps >= self.total_steps {
            return Err(ScheduleError::InvalidSchedule(format!(
                "warmup_steps ({}) must be below total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        Ok(())
    }
}

pub fn lr_at(c: &ScheduleConfig, step: u64) -> Result<f64, ScheduleError> {
    if step > c.total_steps {
        return Err(ScheduleError::StepOutOfRange { step, total: c.total_steps });
    }
    if step < c.warmup_steps {
        return Ok(c.peak_lr * step as f64 / c.warmup_steps as f64);
    }
    let progress = (step - c.warmup_steps) as f64 / (c.total_steps - c.warmup_steps) as f64;
    // written as a descent from the peak so the warmup boundary is exact;
    // the clamp absorbs rounding below the floor at the last step
    Ok((c.peak_lr - 0.5 * (c.peak_lr - c.min_lr) * (1.0 - (PI * progress).cos())).max(c.min_lr))
}

/// Learning rate of a layer `depth_from_top` layers below the top of an
/// encoder: `base · decay^depth`.
pub fn layer_lr(base: f64, depth_from_top: i64, decay: f64) -> Result<f64, ScheduleError> {
    if depth_from_top < 0 {
        return Err(ScheduleError::InvalidDepth(depth_from_top));
    }
    Ok(base * decay.powi(depth_from_top as i32))
}

pub const PATCH_STRIDE: u32 = 14;

/// Patch grid of a square image: `(rows, cols, count)`.
pub fn patch_grid(resolution: u32, stride: u32) -> Result<(u32, u32, u32), ScheduleError> {
    if stride == 0 || resolution == 0 || resolution % stride != 0 {
        return Err(ScheduleError::InvalidResolution { resolution, stride });
    }
    let side = resolution / stride;
    Ok((side, side, side * side))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Multitask,
    Sft,
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pretrain" => Ok(Stage::Pretrain),
            "multitask" => Ok(Stage::Multitask),
            "sft" => Ok(Stage::Sft),
            other => Err(format!("unknown stage {other:?} (expected pretrain, multitask or sft)")),
        }
    }
}

/// Hyperparameters of one training stage.
///
/// A `vit_lr_decay` of 0 means the visual encoder is frozen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: Stage,
    pub image_resolution: u32,
    pub vit_seq_len: u32,
    pub llm_seq_len: u32,
    pub learnable_queries: u32,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub global_batch: u32,
    pub gradient_accumulation: u32,
    pub vit_lr_decay: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl StageConfig {
    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            peak_lr: self.peak_lr,
            min_lr: self.min_lr,
            warmup_steps: self.warmup_steps,
            total_steps: self.total_steps,
        }
    }

    pub fn visual_encoder_frozen(&self) -> bool {
        self.vit_lr_decay == 0.0
    }
}

pub fn stage_preset(stage: Stage) -> StageConfig {
    let shared = StageConfig {
        stage,
        image_resolution: 448,
        vit_seq_len: 1024,
        llm_seq_len: 2048,
        learnable_queries: 256,
        peak_lr: 0.0,
        min_lr: 0.0,
        warmup_steps: 0,
        total_steps: 0,
        global_batch: 0,
        gradient_accumulation: 8,
        vit_lr_decay: 0.95,
        weight_decay: 0.05,
        grad_clip: 1.0,
        adam_beta1: 0.9,
        adam_beta2: 0.98,
        adam_eps: 1e-6,
    };
    match stage {
        Stage::Pretrain => StageConfig {
            image_resolution: 224,
            vit_seq_len: 256,
            llm_seq_len: 512,
            peak_lr: 2e-4,
            min_lr: 1e-6,
            warmup_steps: 500,
            total_steps: 50_000,
            global_batch: 30720,
            gradient_accumulation: 6,
            ..shared
        },
        Stage::Multitask => StageConfig {
            peak_lr: 5e-5,
            min_lr: 1e-5,
            warmup_steps: 400,
            total_steps: 19_000,
            global_batch: 4096,
            ..shared
        },
        Stage::Sft => StageConfig {
            peak_lr: 1e-5,
            min_lr: 1e-6,
            warmup_steps: 3000,
            total_steps: 8000,
            global_batch: 128,
            vit_lr_decay: 0.0,
            ..shared
        },
    }
}
