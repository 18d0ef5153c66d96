//! Pooling kernels. Average pooling divides by the in-bounds tap count so a
//! constant input stays constant at the borders; max pooling likewise ignores
//! padded positions.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn pool_out_dims(h: usize, w: usize, k: usize, s: usize, p: usize) -> Result<(usize, usize)> {
    let span_h = h + 2 * p;
    let span_w = w + 2 * p;
    if span_h < k || span_w < k || s == 0 {
        return Err(Error::DegenerateOutput(format!(
            "pool k={k} s={s} p={p} does not fit input {h}x{w}"
        )));
    }
    Ok(((span_h - k) / s + 1, (span_w - k) / s + 1))
}

fn pool(
    x: &Tensor,
    k: usize,
    s: usize,
    p: usize,
    average: bool,
) -> Result<Tensor> {
    let (n, c, h, w) = x.shape();
    let (oh, ow) = pool_out_dims(h, w, k, s, p)?;
    let mut out = Tensor::zeros(n, c, oh, ow)?;
    for b in 0..n {
        for ch in 0..c {
            let plane = x.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = if average { 0.0 } else { f32::NEG_INFINITY };
                    let mut count = 0u32;
                    for ky in 0..k {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let v = plane[iy as usize * w + ix as usize];
                            if average {
                                acc += v;
                            } else {
                                acc = acc.max(v);
                            }
                            count += 1;
                        }
                    }
                    dst[oy * ow + ox] = if average { acc / count as f32 } else { acc };
                }
            }
        }
    }
    Ok(out)
}

/// Window mean over in-bounds taps.
pub fn avg_pool(x: &Tensor, k: usize, s: usize, p: usize) -> Result<Tensor> {
    pool(x, k, s, p, true)
}

/// Window max over in-bounds taps.
pub fn max_pool(x: &Tensor, k: usize, s: usize, p: usize) -> Result<Tensor> {
    pool(x, k, s, p, false)
}

/// Per-channel spatial mean, shape `(n, c, 1, 1)`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.shape();
    let hw = (h * w) as f32;
    let mut out = Tensor::zeros(n, c, 1, 1)?;
    for b in 0..n {
        for ch in 0..c {
            let sum: f32 = x.plane(b, ch).iter().sum();
            out.plane_mut(b, ch)[0] = sum / hw;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::random_tensor;

    #[test]
    fn maxpool_halves_112_to_56() {
        let x = Tensor::zeros(1, 2, 112, 112).unwrap();
        assert_eq!(max_pool(&x, 3, 2, 1).unwrap().shape(), (1, 2, 56, 56));
    }

    #[test]
    fn constant_input_preserved_by_both_pools() {
        let x = Tensor::new(1, 1, 5, 5, vec![2.5; 25]).unwrap();
        let a = avg_pool(&x, 3, 2, 1).unwrap();
        let m = max_pool(&x, 3, 2, 1).unwrap();
        assert!(a.data().iter().all(|&v| v == 2.5));
        assert!(m.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn avg_pool_2x2_hand_value() {
        let x = Tensor::new(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = avg_pool(&x, 2, 2, 0).unwrap();
        assert_eq!(y.shape(), (1, 1, 1, 1));
        assert_eq!(y.data(), &[2.5]);
    }

    #[test]
    fn degenerate_output_rejected() {
        let x = Tensor::zeros(1, 1, 2, 2).unwrap();
        assert!(max_pool(&x, 5, 2, 0).is_err());
    }

    #[test]
    fn global_avg_pool_shape_and_mean() {
        let x = Tensor::zeros(1, 576, 7, 7).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().shape(), (1, 576, 1, 1));

        let vals: Vec<f32> = (0..49).map(|v| v as f32).collect();
        let x = Tensor::new(1, 1, 7, 7, vals).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[24.0]);
    }

    #[test]
    fn max_pool_ignores_padding_for_negative_values() {
        let x = Tensor::new(1, 1, 2, 2, vec![-1.0, -2.0, -3.0, -4.0]).unwrap();
        let y = max_pool(&x, 3, 2, 1).unwrap();
        assert_eq!(y.data(), &[-1.0]);
    }

    #[test]
    fn avg_pool_shortcut_dims_match_stride2_conv() {
        // The stride-2 unit concatenates a pooled shortcut with the branch;
        // both must agree on output dims, including odd inputs.
        for hw in [56usize, 45, 23, 15] {
            let x = random_tensor(1, 3, hw, hw, 50 + hw as u64);
            let y = avg_pool(&x, 3, 2, 1).unwrap();
            assert_eq!(y.height(), (hw - 1) / 2 + 1);
        }
    }
}
