//! Double-precision reference of the position-aware vision-language adapter.
//!
//! A fixed set of learnable query vectors cross-attends to a variable-size
//! grid of patch features, so every image comes out as exactly `n_queries`
//! rows. Both sides of the query-key product carry 2D sinusoidal position
//! encodings, added before projection:
//!
//! ```text
//! Q = (queries + P(√n, √n)) W_q      K = (x + P(h, w)) W_k      V = x W_v
//! Y = concat_h softmax(Q_h K_hᵀ / √d_head) V_h · W_o
//! ```
//!
//! The module also carries the hand-derived backward pass, an AdamW step,
//! a finite-difference gradient check and a small overfitting demo.

mod attention;
mod demo;
mod optim;
mod posenc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attention::{attention_weights, resample, Forward, Resampler};
pub use demo::{grad_check, overfit_demo, DemoConfig, DemoReport, GradCheckReport, FD_STEP};
pub use optim::{adamw_step, AdamState, AdamWConfig, StepStats};
pub use posenc::posenc_2d;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResamplerError {
    #[error("width {0} is not divisible by 4")]
    InvalidWidth(usize),
    #[error("invalid resampler config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("non-finite value: {0}")]
    NumericalError(String),
}

pub type Result<T> = std::result::Result<T, ResamplerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResamplerConfig {
    pub d_model: usize,
    pub n_queries: usize,
    pub n_heads: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub seed: u64,
}

impl Default for ResamplerConfig {
    fn default() -> Self {
        Self { d_model: 16, n_queries: 256, n_heads: 1, grid_h: 16, grid_w: 16, seed: 0 }
    }
}

impl ResamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ResamplerError::InvalidConfig(m));
        if self.n_heads == 0 || self.d_model == 0 || self.d_model % (4 * self.n_heads) != 0 {
            return bad(format!(
                "d_model ({}) must be a positive multiple of 4 * n_heads ({})",
                self.d_model, self.n_heads
            ));
        }
        if self.query_side().is_none() {
            return bad(format!("n_queries ({}) must be a positive perfect square", self.n_queries));
        }
        if self.grid_h * self.grid_w == 0 {
            return bad(format!("empty key grid {}x{}", self.grid_h, self.grid_w));
        }
        Ok(())
    }

    /// Side of the virtual square grid the queries are laid out on.
    pub fn query_side(&self) -> Option<usize> {
        let side = (self.n_queries as f64).sqrt().round() as usize;
        (self.n_queries > 0 && side * side == self.n_queries).then_some(side)
    }

    pub fn n_keys(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Learnable state: the queries and the four projections.
///
/// Gradients use the same type, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplerParams {
    pub queries: Array2<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
}

pub const INIT_STD: f64 = 0.02;

impl ResamplerParams {
    /// Seeded `N(0, 0.02²)` initialisation, drawn in field order.
    pub fn init(cfg: &ResamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let d = cfg.d_model;
        let mut draw = |rows: usize, cols: usize| {
            Array2::from_shape_simple_fn((rows, cols), || normal.sample(&mut rng))
        };
        Ok(Self {
            queries: draw(cfg.n_queries, d),
            w_q: draw(d, d),
            w_k: draw(d, d),
            w_v: draw(d, d),
            w_o: draw(d, d),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |a: &Array2<f64>| Array2::zeros(a.raw_dim());
        Self {
            queries: z(&self.queries),
            w_q: z(&self.w_q),
            w_k: z(&self.w_k),
            w_v: z(&self.w_v),
            w_o: z(&self.w_o),
        }
    }

    pub const NAMES: [&'static str; 5] = ["queries", "w_q", "w_k", "w_v", "w_o"];

    pub fn tensors(&self) -> [&Array2<f64>; 5] {
        [&self.queries, &self.w_q, &self.w_k, &self.w_v, &self.w_o]
    }

    pub fn tensors_mut(&mut self) -> [&mut Array2<f64>; 5] {
        [&mut self.queries, &mut self.w_q, &mut self.w_k, &mut self.w_v, &mut self.w_o]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(alpha, b);
        }
    }
}

/// Seeded standard-normal patch features, `grid_h * grid_w` rows.
pub fn random_features(cfg: &ResamplerConfig, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid std");
    Array2::from_shape_simple_fn((cfg.n_keys(), cfg.d_model), || normal.sample(&mut rng))
}
