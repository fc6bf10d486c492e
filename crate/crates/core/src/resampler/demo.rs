use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{
    adamw_step, random_features, AdamState, AdamWConfig, Resampler, ResamplerConfig, ResamplerError,
    ResamplerParams, Result,
};
use crate::schedules::{lr_at, ScheduleConfig};

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Largest relative error per parameter tensor, in [`ResamplerParams::NAMES`] order.
    pub per_param: Vec<(String, f64)>,
    pub entries_checked: usize,
}

fn sum_sq_loss(r: &Resampler, p: &ResamplerParams, x: &Array2<f64>) -> Result<f64> {
    Ok(r.forward(p, x.view())?.output.iter().map(|v| v * v).sum())
}

fn entry_mut(p: &mut ResamplerParams, tensor: usize, idx: usize) -> &mut f64 {
    let t = p.tensors_mut().into_iter().nth(tensor).expect("tensor index");
    &mut t.as_slice_mut().expect("standard layout")[idx]
}

/// Compares analytic gradients of `Σ output²` against central finite
/// differences on every parameter entry, using seeded parameters and
/// features. Relative error is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(cfg: &ResamplerConfig) -> Result<GradCheckReport> {
    let r = Resampler::new(*cfg)?;
    let params = ResamplerParams::init(cfg)?;
    let x = random_features(cfg, cfg.seed.wrapping_add(1));
    let f = r.forward(&params, x.view())?;
    let analytic = r.backward(&params, &f, (&f.output * 2.0).view())?;

    let mut per_param = Vec::new();
    let mut entries_checked = 0;
    let mut probe = params.clone();
    for (k, name) in ResamplerParams::NAMES.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for idx in 0..params.tensors()[k].len() {
            let orig = params.tensors()[k].as_slice().expect("standard layout")[idx];
            *entry_mut(&mut probe, k, idx) = orig + FD_STEP;
            let plus = sum_sq_loss(&r, &probe, &x)?;
            *entry_mut(&mut probe, k, idx) = orig - FD_STEP;
            let minus = sum_sq_loss(&r, &probe, &x)?;
            *entry_mut(&mut probe, k, idx) = orig;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic.tensors()[k].as_slice().expect("standard layout")[idx];
            if !numeric.is_finite() {
                return Err(ResamplerError::NumericalError(format!("{name}[{idx}] finite difference")));
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
            entries_checked += 1;
        }
        per_param.push((name.to_string(), worst));
    }
    let max_rel_error = per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, per_param, entries_checked })
}

/// Toy regression: resample each feature grid, mean-pool the query rows and
/// regress the mean patch vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub resampler: ResamplerConfig,
    pub n_samples: usize,
    pub steps: u64,
    pub data_seed: u64,
    pub schedule: ScheduleConfig,
    /// Multiplies the scheduled learning rate; 0 freezes training.
    pub lr_scale: f64,
    pub adam: AdamWConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            resampler: ResamplerConfig { d_model: 16, n_queries: 4, n_heads: 1, grid_h: 3, grid_w: 3, seed: 0 },
            n_samples: 32,
            steps: 2000,
            data_seed: 1234,
            schedule: ScheduleConfig { peak_lr: 1e-2, min_lr: 1e-4, warmup_steps: 100, total_steps: 2000 },
            lr_scale: 1.0,
            adam: AdamWConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    /// Loss before each update, plus the loss after the last one.
    pub losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
}

impl DemoReport {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("non-empty curve")
    }

    pub fn ratio(&self) -> f64 {
        self.final_loss() / self.initial_loss()
    }

    /// `step,loss` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{i},{l:e}\n"));
        }
        out
    }
}

/// Mean-squared error of the whole batch and its parameter gradient.
fn batch_loss(
    r: &Resampler,
    p: &ResamplerParams,
    data: &[(Array2<f64>, ndarray::Array1<f64>)],
) -> Result<(f64, ResamplerParams)> {
    let d = r.cfg.d_model as f64;
    let nq = r.cfg.n_queries as f64;
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grads = p.zeros_like();
    for (x, target) in data {
        let f = r.forward(p, x.view())?;
        let pred = f.output.mean_axis(Axis(0)).expect("rows");
        let err = &pred - target;
        loss += err.dot(&err) / (d * n);
        let d_pred = &err * (2.0 / (d * n));
        let d_out = d_pred.insert_axis(Axis(0)).broadcast(f.output.raw_dim()).expect("row broadcast").to_owned() / nq;
        grads.axpy(1.0, &r.backward(p, &f, d_out.view())?);
    }
    Ok((loss, grads))
}

/// Trains on seeded data with AdamW under the warmup-cosine schedule and
/// returns the loss curve. A NaN loss is reported as an error.
pub fn overfit_demo(cfg: &DemoConfig) -> Result<DemoReport> {
    let r = Resampler::new(cfg.resampler)?;
    if cfg.steps > cfg.schedule.total_steps {
        return Err(ResamplerError::InvalidConfig(format!(
            "{} steps exceed the schedule's {}",
            cfg.steps, cfg.schedule.total_steps
        )));
    }
    cfg.schedule
        .validate()
        .map_err(|e| ResamplerError::InvalidConfig(e.to_string()))?;
    let data: Vec<_> = (0..cfg.n_samples as u64)
        .map(|i| {
            let x = random_features(&cfg.resampler, cfg.data_seed.wrapping_mul(1_000_003).wrapping_add(i));
            let target = x.mean_axis(Axis(0)).expect("rows");
            (x, target)
        })
        .collect();

    let mut params = ResamplerParams::init(&cfg.resampler)?;
    let mut state = AdamState::new(&params);
    let mut losses = Vec::with_capacity(cfg.steps as usize + 1);
    let mut learning_rates = Vec::with_capacity(cfg.steps as usize);
    for step in 0..=cfg.steps {
        let (loss, grads) = batch_loss(&r, &params, &data)?;
        if !loss.is_finite() {
            return Err(ResamplerError::NumericalError(format!("loss diverged at step {step}")));
        }
        losses.push(loss);
        if step == cfg.steps {
            break;
        }
        let lr = cfg.lr_scale * lr_at(&cfg.schedule, step).expect("step within schedule");
        learning_rates.push(lr);
        adamw_step(&mut params, &grads, &mut state, &AdamWConfig { lr, ..cfg.adam })?;
    }
    Ok(DemoReport { losses, learning_rates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ResamplerConfig {
        ResamplerConfig { d_model: 16, n_queries: 4, n_heads: 1, grid_h: 3, grid_w: 3, seed }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let rep = grad_check(&small(0)).unwrap();
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
        assert_eq!(rep.entries_checked, 4 * 16 + 4 * 256);
    }

    #[test]
    fn multi_head_gradients_match() {
        let rep = grad_check(&ResamplerConfig { n_heads: 2, ..small(3) }).unwrap();
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn zero_features_give_zero_value_gradient() {
        let cfg = small(1);
        let r = Resampler::new(cfg).unwrap();
        let p = ResamplerParams::init(&cfg).unwrap();
        let x = Array2::zeros((9, 16));
        let f = r.forward(&p, x.view()).unwrap();
        let g = r.backward(&p, &f, (&f.output * 2.0).view()).unwrap();
        assert!(g.w_v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_is_linear_in_loss_scale() {
        let cfg = small(2);
        let r = Resampler::new(cfg).unwrap();
        let p = ResamplerParams::init(&cfg).unwrap();
        let x = random_features(&cfg, 9);
        let f = r.forward(&p, x.view()).unwrap();
        let g1 = r.backward(&p, &f, (&f.output * 2.0).view()).unwrap();
        let g2 = r.backward(&p, &f, (&f.output * 4.0).view()).unwrap();
        for (a, b) in g1.tensors().into_iter().zip(g2.tensors()) {
            for (x1, x2) in a.iter().zip(b.iter()) {
                assert_eq!(2.0 * x1, *x2);
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        let cfg = DemoConfig { steps: 20, lr_scale: 0.0, ..DemoConfig::default() };
        let rep = overfit_demo(&cfg).unwrap();
        assert_eq!(rep.losses.len(), 21);
        assert!(rep.losses.iter().all(|&l| l == rep.losses[0]));
    }

    #[test]
    fn csv_layout() {
        let rep = DemoReport { losses: vec![1.0, 0.5], learning_rates: vec![0.1] };
        assert_eq!(rep.to_csv(), "step,loss\n0,1e0\n1,5e-1\n");
    }
}
