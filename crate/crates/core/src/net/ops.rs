//! Forward kernels: convolution, ReLU, max pooling, fully connected.
//!
//! Every kernel accumulates in a fixed order (input channel, then kernel
//! row, then kernel column, ascending), so repeated runs are bit-identical.

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Output extent of a convolution along one axis: floor((in + 2p - k)/s) + 1.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::config("kernel and stride must be positive"));
    }
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::config(format!(
            "kernel {} exceeds padded input {}",
            kernel, padded
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output extent of a pooling window: floor((in - k)/s) + 1.
pub fn pool_out_dim(input: usize, window: usize, stride: usize) -> Result<usize> {
    if window == 0 || stride == 0 {
        return Err(Error::config("window and stride must be positive"));
    }
    if input < window {
        return Err(Error::config(format!(
            "pool window {} exceeds input {}",
            window, input
        )));
    }
    Ok((input - window) / stride + 1)
}

/// 2D cross-correlation with zero padding.
///
/// `weight` has shape (out_ch, in_ch, kh, kw); `bias` one entry per output
/// channel. Out-of-image taps are skipped, which leaves sums identical to
/// explicit zero padding.
pub fn conv2d(
    input: &Tensor4,
    weight: &Tensor4,
    bias: &[f32],
    stride: usize,
    padding: usize,
) -> Result<Tensor4> {
    let (n, ic, h, w) = input.shape();
    let (oc, wic, kh, kw) = weight.shape();
    if wic != ic {
        return Err(Error::config(format!(
            "conv weight expects {} input channels, got {}",
            wic, ic
        )));
    }
    if bias.len() != oc {
        return Err(Error::config(format!(
            "conv bias length {} does not match {} output channels",
            bias.len(),
            oc
        )));
    }
    let oh = conv_out_dim(h, kh, stride, padding)?;
    let ow = conv_out_dim(w, kw, stride, padding)?;

    let mut out = Tensor4::zeros(n, oc, oh, ow);
    let p = padding as isize;
    // Accumulate scaled input rows into output rows instead of folding per
    // output pixel. Every output element still receives its terms in
    // (channel, ky, kx) order on top of the bias, so results match a
    // per-pixel fold bit for bit while the inner loop runs over
    // independent accumulators.
    for b in 0..n {
        for o in 0..oc {
            let out_map = out.map_mut(b, o);
            out_map.fill(bias[o]);
            for c in 0..ic {
                let in_map = input.map(b, c);
                let w_map = weight.map(o, c);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = w_map[ky * kw + kx];
                        let off = kx as isize - p;
                        let x_lo = if off >= 0 {
                            0
                        } else {
                            ((-off) as usize).div_ceil(stride)
                        };
                        let top = w as isize - 1 - off;
                        if top < 0 {
                            continue;
                        }
                        let x_hi = (top as usize / stride + 1).min(ow);
                        if x_lo >= x_hi {
                            continue;
                        }
                        for y in 0..oh {
                            let iy = (y * stride + ky) as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let in_row = &in_map[iy as usize * w..iy as usize * w + w];
                            let out_row = &mut out_map[y * ow..y * ow + ow];
                            if stride == 1 {
                                let ix0 = (x_lo as isize + off) as usize;
                                let in_seg = &in_row[ix0..ix0 + (x_hi - x_lo)];
                                for (ov, iv) in out_row[x_lo..x_hi].iter_mut().zip(in_seg) {
                                    *ov += wv * iv;
                                }
                            } else {
                                for x in x_lo..x_hi {
                                    let ix = (x * stride) as isize + off;
                                    out_row[x] += wv * in_row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Elementwise max(0, x). Written as a comparison so NaN propagates instead
/// of being absorbed by `f32::max`.
pub fn relu(input: &Tensor4) -> Tensor4 {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Max pooling over square windows. A NaN anywhere in a window wins it.
pub fn maxpool2d(input: &Tensor4, window: usize, stride: usize) -> Result<Tensor4> {
    let (n, c, h, w) = input.shape();
    let oh = pool_out_dim(h, window, stride)?;
    let ow = pool_out_dim(w, window, stride)?;
    let mut out = Tensor4::zeros(n, c, oh, ow);
    for b in 0..n {
        for ch in 0..c {
            let map = input.map(b, ch);
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut poisoned = false;
                    'win: for ky in 0..window {
                        let row = &map[(y * stride + ky) * w..];
                        for kx in 0..window {
                            let v = row[x * stride + kx];
                            if v.is_nan() {
                                poisoned = true;
                                break 'win;
                            }
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    out.set(b, ch, y, x, if poisoned { f32::NAN } else { best });
                }
            }
        }
    }
    Ok(out)
}

/// Fully connected layer over flattened samples.
///
/// `weight` is row-major (out_features x in_features); each sample's
/// `c*h*w` elements are consumed in storage order.
pub fn linear(input: &Tensor4, weight: &[f32], bias: &[f32], out_features: usize) -> Result<Tensor4> {
    let (n, c, h, w) = input.shape();
    let in_features = c * h * w;
    if weight.len() != out_features * in_features {
        return Err(Error::config(format!(
            "linear weight length {} does not match {}x{}",
            weight.len(),
            out_features,
            in_features
        )));
    }
    if bias.len() != out_features {
        return Err(Error::config(format!(
            "linear bias length {} does not match {} outputs",
            bias.len(),
            out_features
        )));
    }
    let mut out = Tensor4::zeros(n, out_features, 1, 1);
    for b in 0..n {
        let x = input.sample(b);
        for o in 0..out_features {
            let row = &weight[o * in_features..(o + 1) * in_features];
            let acc = row
                .iter()
                .zip(x)
                .fold(bias[o], |a, (wv, xv)| a + wv * xv);
            out.set(b, o, 0, 0, acc);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: usize, c: usize, h: usize, w: usize, data: &[f32]) -> Tensor4 {
        Tensor4::new(n, c, h, w, data.to_vec()).unwrap()
    }

    #[test]
    fn conv_ones_kernel_counts_window() {
        let input = Tensor4::filled(1, 1, 3, 3, 1.0);
        let weight = Tensor4::filled(1, 1, 2, 2, 1.0);
        let out = conv2d(&input, &weight, &[0.0], 1, 0).unwrap();
        assert_eq!(out.shape(), (1, 1, 2, 2));
        assert!(out.data().iter().all(|&v| v == 4.0), "{:?}", out.data());
    }

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        let input = t(1, 1, 2, 3, &[1.0, -2.0, 3.0, 4.0, 5.0, -6.0]);
        let weight = Tensor4::filled(1, 1, 1, 1, 1.0);
        let out = conv2d(&input, &weight, &[0.0], 1, 0).unwrap();
        assert!(out.bitwise_eq(&input));
    }

    #[test]
    fn conv_padding_reaches_corner() {
        // Single pixel, 3x3 kernel, pad 1: only the kernel center overlaps.
        let input = t(1, 1, 1, 1, &[2.0]);
        let weight = t(1, 1, 3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let out = conv2d(&input, &weight, &[0.5], 1, 1).unwrap();
        assert_eq!(out.shape(), (1, 1, 1, 1));
        assert_eq!(out.get(0, 0, 0, 0), 0.5 + 5.0 * 2.0);
    }

    #[test]
    fn conv_stride_skips_positions() {
        let input = t(1, 1, 1, 5, &[1.0, 10.0, 100.0, 1000.0, 10000.0]);
        let weight = Tensor4::filled(1, 1, 1, 1, 1.0);
        let out = conv2d(&input, &weight, &[0.0], 2, 0).unwrap();
        assert_eq!(out.data(), &[1.0, 100.0, 10000.0]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let input = Tensor4::zeros(1, 2, 3, 3);
        let weight = Tensor4::zeros(1, 3, 2, 2);
        assert!(conv2d(&input, &weight, &[0.0], 1, 0).is_err());
    }

    #[test]
    fn conv_out_dim_rejects_oversized_kernel() {
        assert!(conv_out_dim(2, 5, 1, 0).is_err());
        assert_eq!(conv_out_dim(2, 5, 1, 2).unwrap(), 2);
    }

    #[test]
    fn relu_clamps_negatives_and_keeps_nan() {
        let input = t(1, 1, 1, 4, &[-1.0, 0.0, 2.0, f32::NAN]);
        let out = relu(&input);
        assert_eq!(out.data()[..3], [0.0, 0.0, 2.0]);
        assert!(out.data()[3].is_nan(), "relu must not absorb NaN");
    }

    #[test]
    fn relu_on_all_negative_is_zero() {
        let out = relu(&Tensor4::filled(1, 2, 2, 2, -3.5));
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maxpool_picks_window_max() {
        let input = t(1, 1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let out = maxpool2d(&input, 2, 2).unwrap();
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn maxpool_constant_input_stays_constant() {
        let input = Tensor4::filled(1, 1, 4, 4, 7.0);
        let out = maxpool2d(&input, 2, 2).unwrap();
        assert_eq!(out.shape(), (1, 1, 2, 2));
        assert!(out.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn maxpool_nan_wins_its_window() {
        let input = t(1, 1, 2, 4, &[1.0, 2.0, 9.0, 8.0, 3.0, f32::NAN, 7.0, 6.0]);
        let out = maxpool2d(&input, 2, 2).unwrap();
        assert!(out.get(0, 0, 0, 0).is_nan());
        assert_eq!(out.get(0, 0, 0, 1), 9.0);
    }

    #[test]
    fn maxpool_rejects_window_larger_than_input() {
        assert!(maxpool2d(&Tensor4::zeros(1, 1, 2, 2), 3, 1).is_err());
    }

    #[test]
    fn linear_identity_weight() {
        let input = t(1, 3, 1, 1, &[1.0, 2.0, 3.0]);
        let weight = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let out = linear(&input, &weight, &[0.0; 3], 3).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn linear_zero_weight_yields_bias() {
        let input = Tensor4::filled(2, 4, 1, 1, 3.0);
        let out = linear(&input, &[0.0; 8], &[0.25, -1.0], 2).unwrap();
        assert_eq!(out.data(), &[0.25, -1.0, 0.25, -1.0]);
    }

    #[test]
    fn linear_flattens_in_storage_order() {
        let input = t(1, 1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        // Weight row picks out the last flattened element.
        let out = linear(&input, &[0.0, 0.0, 0.0, 1.0], &[0.0], 1).unwrap();
        assert_eq!(out.data(), &[4.0]);
    }
}
