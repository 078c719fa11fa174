//! Minimal SGD trainer: softmax cross-entropy, momentum, per-sample
//! backprop summed in a fixed order so training runs are reproducible.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::{ops, LayerSpec, Network};
use crate::tensor::Tensor4;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    /// Multiplier applied to the learning rate after every epoch.
    pub lr_decay: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            lr_decay: 0.85,
            seed: 2,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

/// Per-layer parameter gradients; `None` for parameterless layers.
type Grads = Vec<Option<(Vec<f32>, Vec<f32>)>>;

fn zero_grads(net: &Network) -> Grads {
    net.layers
        .iter()
        .map(|l| match l {
            LayerSpec::Conv2d { weight, bias, .. } => {
                Some((vec![0.0; weight.len()], vec![0.0; bias.len()]))
            }
            LayerSpec::Linear { weight, bias, .. } => {
                Some((vec![0.0; weight.len()], vec![0.0; bias.len()]))
            }
            _ => None,
        })
        .collect()
}

/// Train in place. Samples are visited in a seed-shuffled order; per-batch
/// gradients are computed per sample (parallel) and summed in sample order,
/// which keeps the whole run bit-reproducible for a given config.
pub fn fit(
    net: &mut Network,
    images: &Tensor4,
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    let n = images.n();
    if n == 0 || labels.len() != n {
        return Err(Error::config("training set empty or labels mismatched"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = zero_grads(net);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = Vec::with_capacity(cfg.epochs);
    let mut lr = cfg.learning_rate;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;

        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(Grads, f64, bool)> = batch
                .par_iter()
                .map(|&i| sample_grads(net, images, labels[i] as usize, i))
                .collect::<Result<Vec<_>>>()?;

            let mut total = zero_grads(net);
            for (g, loss, hit) in results {
                loss_sum += loss;
                correct += hit as usize;
                accumulate(&mut total, &g);
            }
            let scale = lr / batch.len() as f32;
            apply_sgd(net, &mut velocity, &total, scale, cfg.momentum);
        }

        stats.push(EpochStats {
            epoch,
            mean_loss: loss_sum / n as f64,
            train_accuracy: correct as f64 / n as f64,
        });
        lr *= cfg.lr_decay;
    }
    Ok(stats)
}

/// Fraction of samples whose top-1 prediction matches the label.
pub fn accuracy(net: &Network, images: &Tensor4, labels: &[u8]) -> Result<f64> {
    let n = images.n();
    if n == 0 {
        return Err(Error::config("empty evaluation set"));
    }
    let mut correct = 0usize;
    for i in 0..n {
        let logits = net.forward(&images.slice_sample(i))?;
        if super::top1(logits.sample(0))? == labels[i] as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

fn accumulate(total: &mut Grads, g: &Grads) {
    for (t, s) in total.iter_mut().zip(g) {
        if let (Some((tw, tb)), Some((sw, sb))) = (t.as_mut(), s.as_ref()) {
            for (a, b) in tw.iter_mut().zip(sw) {
                *a += b;
            }
            for (a, b) in tb.iter_mut().zip(sb) {
                *a += b;
            }
        }
    }
}

fn apply_sgd(net: &mut Network, velocity: &mut Grads, grads: &Grads, scale: f32, momentum: f32) {
    for ((layer, v), g) in net.layers.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        let (Some((vw, vb)), Some((gw, gb))) = (v.as_mut(), g.as_ref()) else {
            continue;
        };
        match layer {
            LayerSpec::Conv2d { weight, bias, .. } => {
                for ((w, v), g) in weight.data_mut().iter_mut().zip(vw.iter_mut()).zip(gw) {
                    *v = momentum * *v - scale * g;
                    *w += *v;
                }
                for ((b, v), g) in bias.iter_mut().zip(vb.iter_mut()).zip(gb) {
                    *v = momentum * *v - scale * g;
                    *b += *v;
                }
            }
            LayerSpec::Linear { weight, bias, .. } => {
                for ((w, v), g) in weight.iter_mut().zip(vw.iter_mut()).zip(gw) {
                    *v = momentum * *v - scale * g;
                    *w += *v;
                }
                for ((b, v), g) in bias.iter_mut().zip(vb.iter_mut()).zip(gb) {
                    *v = momentum * *v - scale * g;
                    *b += *v;
                }
            }
            _ => {}
        }
    }
}

enum Cache {
    Conv { input: Tensor4 },
    Relu { input: Tensor4 },
    Pool { input_shape: (usize, usize, usize, usize), argmax: Vec<usize> },
    Linear { input: Tensor4 },
}

/// Forward + backward for one sample; returns gradients, loss, and whether
/// the prediction was correct.
fn sample_grads(
    net: &Network,
    images: &Tensor4,
    label: usize,
    index: usize,
) -> Result<(Grads, f64, bool)> {
    let mut x = images.slice_sample(index);
    let mut caches = Vec::with_capacity(net.layers.len());

    for layer in &net.layers {
        x = match layer {
            LayerSpec::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => {
                caches.push(Cache::Conv { input: x.clone() });
                ops::conv2d(&x, weight, bias, *stride, *padding)?
            }
            LayerSpec::Relu => {
                caches.push(Cache::Relu { input: x.clone() });
                ops::relu(&x)
            }
            LayerSpec::MaxPool2d { window, stride } => {
                let (out, argmax) = maxpool_with_argmax(&x, *window, *stride)?;
                caches.push(Cache::Pool {
                    input_shape: x.shape(),
                    argmax,
                });
                out
            }
            LayerSpec::Linear {
                weight,
                bias,
                out_features,
                ..
            } => {
                caches.push(Cache::Linear { input: x.clone() });
                ops::linear(&x, weight, bias, *out_features)?
            }
        };
    }

    let logits = x.sample(0);
    let (loss, mut dy) = softmax_cross_entropy(logits, label);
    let hit = super::top1(logits)? == label;

    let mut grads = zero_grads(net);
    for (li, layer) in net.layers.iter().enumerate().rev() {
        dy = match (layer, &caches[li]) {
            (
                LayerSpec::Linear {
                    weight,
                    in_features,
                    out_features,
                    ..
                },
                Cache::Linear { input },
            ) => {
                let xin = input.sample(0);
                let (gw, gb) = grads[li].as_mut().expect("linear has grads");
                let mut dx = vec![0.0f32; *in_features];
                for o in 0..*out_features {
                    let g = dy[o];
                    gb[o] += g;
                    let row = &weight[o * in_features..(o + 1) * in_features];
                    let grow = &mut gw[o * in_features..(o + 1) * in_features];
                    for i in 0..*in_features {
                        grow[i] += g * xin[i];
                        dx[i] += row[i] * g;
                    }
                }
                dx
            }
            (LayerSpec::Relu, Cache::Relu { input }) => {
                let mut dx = dy;
                for (d, &v) in dx.iter_mut().zip(input.data()) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                dx
            }
            (LayerSpec::MaxPool2d { .. }, Cache::Pool { input_shape, argmax }) => {
                let (_, c, h, w) = *input_shape;
                let mut dx = vec![0.0f32; c * h * w];
                for (out_i, &in_i) in argmax.iter().enumerate() {
                    dx[in_i] += dy[out_i];
                }
                dx
            }
            (
                LayerSpec::Conv2d {
                    weight,
                    stride,
                    padding,
                    ..
                },
                Cache::Conv { input },
            ) => conv_backward(input, weight, &dy, *stride, *padding, grads[li].as_mut().unwrap()),
            _ => unreachable!("cache kind matches layer kind"),
        };
    }

    Ok((grads, loss, hit))
}

fn softmax_cross_entropy(logits: &[f32], label: usize) -> (f64, Vec<f32>) {
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits.iter().map(|&v| ((v - max) as f64).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let mut dy: Vec<f32> = exps.iter().map(|&e| (e / sum) as f32).collect();
    let loss = -(exps[label] / sum).ln();
    dy[label] -= 1.0;
    (loss, dy)
}

fn maxpool_with_argmax(input: &Tensor4, window: usize, stride: usize) -> Result<(Tensor4, Vec<usize>)> {
    let (n, c, h, w) = input.shape();
    debug_assert_eq!(n, 1);
    let oh = ops::pool_out_dim(h, window, stride)?;
    let ow = ops::pool_out_dim(w, window, stride)?;
    let mut out = Tensor4::zeros(1, c, oh, ow);
    let mut argmax = vec![0usize; c * oh * ow];
    for ch in 0..c {
        let map = input.map(0, ch);
        for y in 0..oh {
            for x in 0..ow {
                let mut best = f32::NEG_INFINITY;
                let mut best_i = 0;
                for ky in 0..window {
                    for kx in 0..window {
                        let iy = y * stride + ky;
                        let ix = x * stride + kx;
                        let v = map[iy * w + ix];
                        if v > best {
                            best = v;
                            best_i = iy * w + ix;
                        }
                    }
                }
                out.set(0, ch, y, x, best);
                argmax[(ch * oh + y) * ow + x] = ch * h * w + best_i;
            }
        }
    }
    Ok((out, argmax))
}

/// Scatter-style conv backward for a single sample. Returns dx (flattened
/// input gradient) and accumulates dW/db into `grads`.
fn conv_backward(
    input: &Tensor4,
    weight: &Tensor4,
    dy: &[f32],
    stride: usize,
    padding: usize,
    grads: &mut (Vec<f32>, Vec<f32>),
) -> Vec<f32> {
    let (_, ic, h, w) = input.shape();
    let (oc, _, kh, kw) = weight.shape();
    let oh = ops::conv_out_dim(h, kh, stride, padding).expect("validated");
    let ow = ops::conv_out_dim(w, kw, stride, padding).expect("validated");
    let (gw, gb) = grads;
    let mut dx = vec![0.0f32; ic * h * w];
    let p = padding as isize;

    for o in 0..oc {
        for y in 0..oh {
            for x in 0..ow {
                let g = dy[(o * oh + y) * ow + x];
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                for c in 0..ic {
                    let in_map = input.map(0, c);
                    let w_base = (o * ic + c) * kh * kw;
                    for ky in 0..kh {
                        let iy = (y * stride + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (x * stride + kx) as isize - p;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let in_i = iy as usize * w + ix as usize;
                            gw[w_base + ky * kw + kx] += g * in_map[in_i];
                            dx[c * h * w + in_i] += weight.data()[w_base + ky * kw + kx] * g;
                        }
                    }
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::io::network_from_topology;

    const TOPOLOGY: &str = "\
input 1 6 6
conv 4 3x3 stride 1 pad 1
relu
maxpool 2 stride 2
linear 2
";

    /// Blobs in the top-left vs bottom-right corner; linearly separable.
    fn toy_data(n: usize, seed: u64) -> (Tensor4, Vec<u8>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0f32; n * 36];
        let mut labels = vec![0u8; n];
        for i in 0..n {
            let class = (i % 2) as u8;
            labels[i] = class;
            let (cy, cx) = if class == 0 { (1, 1) } else { (4, 4) };
            for dy in 0..2 {
                for dx in 0..2 {
                    let jitter: f32 = rng.random_range(0.6..1.0);
                    data[i * 36 + (cy + dy) * 6 + (cx + dx)] = jitter;
                }
            }
        }
        (Tensor4::new(n, 1, 6, 6, data).unwrap(), labels)
    }

    #[test]
    fn numeric_gradient_check_on_conv_and_linear() {
        // Central-difference check of d(loss)/d(param) on a handful of
        // parameters; catches index errors in the backward pass.
        let net = network_from_topology(TOPOLOGY, 3).unwrap();
        let (images, labels) = toy_data(2, 7);
        let eps = 1e-3f32;

        let loss_of = |net: &Network| -> f64 {
            let mut total = 0.0;
            for i in 0..2 {
                let logits = net.forward(&images.slice_sample(i)).unwrap();
                let (loss, _) = softmax_cross_entropy(logits.sample(0), labels[i] as usize);
                total += loss;
            }
            total
        };

        let mut analytic = zero_grads(&net);
        for i in 0..2 {
            let (g, _, _) = sample_grads(&net, &images, labels[i] as usize, i).unwrap();
            accumulate(&mut analytic, &g);
        }

        // Probe a few conv weights and a few linear weights.
        for (layer_idx, probe) in [(0usize, [0usize, 7, 20]), (3usize, [0usize, 9, 30])] {
            for &pi in &probe {
                let mut plus = net.clone();
                let mut minus = net.clone();
                for (n, sign) in [(&mut plus, eps), (&mut minus, -eps)] {
                    match &mut n.layers[layer_idx] {
                        LayerSpec::Conv2d { weight, .. } => weight.data_mut()[pi] += sign,
                        LayerSpec::Linear { weight, .. } => weight[pi] += sign,
                        _ => unreachable!(),
                    }
                }
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps as f64);
                let got = analytic[layer_idx].as_ref().unwrap().0[pi] as f64;
                assert!(
                    (numeric - got).abs() < 1e-2 * (1.0 + numeric.abs()),
                    "layer {} param {}: numeric {} vs analytic {}",
                    layer_idx,
                    pi,
                    numeric,
                    got
                );
            }
        }
    }

    #[test]
    fn fit_learns_separable_toy_problem() {
        let mut net = network_from_topology(TOPOLOGY, 3).unwrap();
        let (images, labels) = toy_data(64, 11);
        let cfg = TrainConfig {
            epochs: 8,
            batch_size: 8,
            learning_rate: 0.1,
            momentum: 0.9,
            lr_decay: 0.9,
            seed: 1,
        };
        let stats = fit(&mut net, &images, &labels, &cfg).unwrap();
        let acc = accuracy(&net, &images, &labels).unwrap();
        assert!(
            acc >= 0.95,
            "toy accuracy {} after {} epochs (loss trail {:?})",
            acc,
            cfg.epochs,
            stats.iter().map(|s| s.mean_loss).collect::<Vec<_>>()
        );
    }

    #[test]
    fn fit_is_reproducible_for_fixed_seed() {
        let (images, labels) = toy_data(32, 5);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let mut a = network_from_topology(TOPOLOGY, 3).unwrap();
        let mut b = network_from_topology(TOPOLOGY, 3).unwrap();
        fit(&mut a, &images, &labels, &cfg).unwrap();
        fit(&mut b, &images, &labels, &cfg).unwrap();
        assert_eq!(
            a.weights_hash(),
            b.weights_hash(),
            "same data, config, and seed must give identical weights"
        );
    }
}
