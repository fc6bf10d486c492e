use ndarray::Array2;

use super::{ResamplerError, Result};

/// Fixed 2D sinusoidal encodings for an `h × w` grid, one row per cell in
/// row-major order.
///
/// The first `d/2` channels encode the row index and the last `d/2` the
/// column index. Within each half, channel `2i` is `sin(p·ω_i)` and channel
/// `2i+1` is `cos(p·ω_i)` with `ω_i = 10000^(-2i/(d/2))`.
pub fn posenc_2d(h: usize, w: usize, d: usize) -> Result<Array2<f64>> {
    if d == 0 || d % 4 != 0 {
        return Err(ResamplerError::InvalidWidth(d));
    }
    let half = d / 2;
    let freqs: Vec<f64> = (0..half / 2)
        .map(|i| 10000f64.powf(-2.0 * i as f64 / half as f64))
        .collect();
    let mut out = Array2::zeros((h * w, d));
    for r in 0..h {
        for c in 0..w {
            let mut row = out.row_mut(r * w + c);
            for (i, f) in freqs.iter().enumerate() {
                let (pr, pc) = (r as f64 * f, c as f64 * f);
                row[2 * i] = pr.sin();
                row[2 * i + 1] = pr.cos();
                row[half + 2 * i] = pc.sin();
                row[half + 2 * i + 1] = pc.cos();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_sin_zero_cos_one() {
        let p = posenc_2d(1, 1, 16).unwrap();
        assert_eq!(p.nrows(), 1);
        for (ch, v) in p.row(0).iter().enumerate() {
            assert_eq!(*v, if ch % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn row_change_only_touches_first_half() {
        let (h, w, d) = (5, 4, 8);
        let p = posenc_2d(h, w, d).unwrap();
        let (r1, r2, c) = (1, 3, 2);
        let a = p.row(r1 * w + c);
        let b = p.row(r2 * w + c);
        for ch in 0..d {
            let differs = (a[ch] - b[ch]).abs() > 1e-12;
            assert_eq!(differs, ch < d / 2, "channel {ch}");
        }
        // channel 2 is sin(r * 10000^(-2/4)) = sin(r / 100)
        assert!((a[2] - (1.0f64 / 100.0).sin()).abs() < 1e-15);
        assert!((b[3] - (3.0f64 / 100.0).cos()).abs() < 1e-15);
    }

    #[test]
    fn width_must_divide_by_four() {
        assert_eq!(posenc_2d(2, 2, 6).unwrap_err(), ResamplerError::InvalidWidth(6));
        assert_eq!(posenc_2d(2, 2, 0).unwrap_err(), ResamplerError::InvalidWidth(0));
    }
}
