use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::{posenc_2d, ResamplerConfig, ResamplerError, ResamplerParams, Result};

/// A validated config together with its position encodings.
#[derive(Debug, Clone)]
pub struct Resampler {
    pub cfg: ResamplerConfig,
    pub query_pos: Array2<f64>,
    pub key_pos: Array2<f64>,
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub x: Array2<f64>,
    pub q_in: Array2<f64>,
    pub k_in: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Softmax weights per head, `n_queries × n_keys` each.
    pub attn: Vec<Array2<f64>>,
    /// Concatenated head outputs before `W_o`.
    pub heads: Array2<f64>,
    pub output: Array2<f64>,
}

fn check_finite(what: &str, a: ArrayView2<f64>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ResamplerError::NumericalError(format!("{what} contains NaN or Inf")))
    }
}

fn check_shape(what: &str, a: ArrayView2<f64>, want: (usize, usize)) -> Result<()> {
    if a.dim() == want {
        Ok(())
    } else {
        Err(ResamplerError::ShapeError(format!("{what} is {:?}, expected {want:?}", a.dim())))
    }
}

fn softmax_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    m
}

impl Resampler {
    pub fn new(cfg: ResamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let side = cfg.query_side().expect("validated");
        Ok(Self {
            query_pos: posenc_2d(side, side, cfg.d_model)?,
            key_pos: posenc_2d(cfg.grid_h, cfg.grid_w, cfg.d_model)?,
            cfg,
        })
    }

    fn check_params(&self, p: &ResamplerParams) -> Result<()> {
        let d = self.cfg.d_model;
        check_shape("queries", p.queries.view(), (self.cfg.n_queries, d))?;
        for (name, w) in ResamplerParams::NAMES.iter().zip(p.tensors()).skip(1) {
            check_shape(name, w.view(), (d, d))?;
        }
        for (name, t) in ResamplerParams::NAMES.iter().zip(p.tensors()) {
            check_finite(name, t.view())?;
        }
        Ok(())
    }

    pub fn forward(&self, p: &ResamplerParams, x: ArrayView2<f64>) -> Result<Forward> {
        self.forward_with_key_pos(p, x, self.key_pos.view())
    }

    /// Forward pass with explicit per-key position encodings, one row per
    /// row of `x`. The key count may differ from the configured grid.
    pub fn forward_with_key_pos(
        &self,
        p: &ResamplerParams,
        x: ArrayView2<f64>,
        key_pos: ArrayView2<f64>,
    ) -> Result<Forward> {
        let d = self.cfg.d_model;
        self.check_params(p)?;
        if x.ncols() != d || x.nrows() == 0 {
            return Err(ResamplerError::ShapeError(format!(
                "features are {:?}, expected (n_keys > 0, {d})",
                x.dim()
            )));
        }
        check_shape("key positions", key_pos, x.dim())?;
        check_finite("features", x)?;

        let q_in = &p.queries + &self.query_pos;
        let k_in = &x + &key_pos;
        let q = q_in.dot(&p.w_q);
        let k = k_in.dot(&p.w_k);
        let v = x.dot(&p.w_v);

        let dh = self.cfg.d_head();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Array2::zeros((self.cfg.n_queries, d));
        let mut attn = Vec::with_capacity(self.cfg.n_heads);
        for h in 0..self.cfg.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let logits = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let a = softmax_rows(logits);
            heads.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
            attn.push(a);
        }
        let output = heads.dot(&p.w_o);
        check_finite("output", output.view())?;
        Ok(Forward { x: x.to_owned(), q_in, k_in, q, k, v, attn, heads, output })
    }

    /// Gradients of a scalar loss with respect to every parameter, given
    /// `d_output = ∂loss/∂output`.
    pub fn backward(
        &self,
        p: &ResamplerParams,
        f: &Forward,
        d_output: ArrayView2<f64>,
    ) -> Result<ResamplerParams> {
        check_shape("output gradient", d_output, f.output.dim())?;
        check_finite("output gradient", d_output)?;
        let dh = self.cfg.d_head();
        let scale = 1.0 / (dh as f64).sqrt();

        let w_o = f.heads.t().dot(&d_output);
        let d_heads = d_output.dot(&p.w_o.t());
        let mut dq = Array2::zeros(f.q.raw_dim());
        let mut dk = Array2::zeros(f.k.raw_dim());
        let mut dv = Array2::zeros(f.v.raw_dim());
        for (h, a) in f.attn.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let d_oh = d_heads.slice(cols);
            let da = d_oh.dot(&f.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&d_oh));
            // softmax: dS = A ⊙ (dA − rowsum(dA ⊙ A))
            let row_dot: Array1<f64> = (&da * a).sum_axis(Axis(1));
            let ds = (a * &(&da - &row_dot.insert_axis(Axis(1)))) * scale;
            dq.slice_mut(cols).assign(&ds.dot(&f.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&f.q.slice(cols)));
        }
        let grads = ResamplerParams {
            queries: dq.dot(&p.w_q.t()),
            w_q: f.q_in.t().dot(&dq),
            w_k: f.k_in.t().dot(&dk),
            w_v: f.x.t().dot(&dv),
            w_o,
        };
        if !grads.is_finite() {
            return Err(ResamplerError::NumericalError("gradient contains NaN or Inf".into()));
        }
        Ok(grads)
    }
}

/// Compresses `grid_h * grid_w` patch rows into `n_queries` rows.
pub fn resample(x: ArrayView2<f64>, p: &ResamplerParams, cfg: &ResamplerConfig) -> Result<Array2<f64>> {
    Ok(Resampler::new(*cfg)?.forward(p, x)?.output)
}

/// Softmax weights of every head, `n_queries × n_keys` each.
pub fn attention_weights(
    x: ArrayView2<f64>,
    p: &ResamplerParams,
    cfg: &ResamplerConfig,
) -> Result<Vec<Array2<f64>>> {
    Ok(Resampler::new(*cfg)?.forward(p, x)?.attn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resampler::random_features;

    fn small() -> ResamplerConfig {
        ResamplerConfig { d_model: 16, n_queries: 4, n_heads: 1, grid_h: 3, grid_w: 3, seed: 7 }
    }

    #[test]
    fn output_rows_follow_queries() {
        let cfg = small();
        let p = ResamplerParams::init(&cfg).unwrap();
        let y = resample(random_features(&cfg, 1).view(), &p, &cfg).unwrap();
        assert_eq!(y.dim(), (4, 16));
    }

    #[test]
    fn zero_query_key_projections_average_values() {
        let cfg = small();
        let mut p = ResamplerParams::init(&cfg).unwrap();
        p.w_q.fill(0.0);
        p.w_k.fill(0.0);
        let x = random_features(&cfg, 2);
        let a = &attention_weights(x.view(), &p, &cfg).unwrap()[0];
        assert!(a.iter().all(|&w| (w - 1.0 / 9.0).abs() < 1e-15));
        let y = resample(x.view(), &p, &cfg).unwrap();
        let expected = x.dot(&p.w_v).mean_axis(Axis(0)).unwrap().dot(&p.w_o);
        for row in y.rows() {
            for (a, b) in row.iter().zip(expected.iter()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn multi_head_rows_sum_to_one() {
        let cfg = ResamplerConfig { n_heads: 2, ..small() };
        let p = ResamplerParams::init(&cfg).unwrap();
        let attn = attention_weights(random_features(&cfg, 3).view(), &p, &cfg).unwrap();
        assert_eq!(attn.len(), 2);
        for a in attn {
            for row in a.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_and_value_errors() {
        let cfg = small();
        let p = ResamplerParams::init(&cfg).unwrap();
        let wrong = Array2::zeros((9, 8));
        assert!(matches!(resample(wrong.view(), &p, &cfg), Err(ResamplerError::ShapeError(_))));
        let mut x = random_features(&cfg, 4);
        x[[0, 0]] = f64::NAN;
        assert!(matches!(resample(x.view(), &p, &cfg), Err(ResamplerError::NumericalError(_))));
        let mut bad = p.clone();
        bad.w_v[[1, 1]] = f64::INFINITY;
        let x = random_features(&cfg, 4);
        assert!(matches!(resample(x.view(), &bad, &cfg), Err(ResamplerError::NumericalError(_))));
        let mut short = p.clone();
        short.queries = Array2::zeros((3, 16));
        assert!(matches!(resample(x.view(), &short, &cfg), Err(ResamplerError::ShapeError(_))));
    }
}
