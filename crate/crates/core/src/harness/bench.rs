//! Wall-clock comparison of inference variants: plain forward passes,
//! monitored passes with the reduced and the full marker set, and a
//! baseline that records every feature-map sum instead of quantiles.
//!
//! All variants run strictly serially and interleaved (one rep runs every
//! variant back to back over the whole image set), so drift in machine
//! load spreads evenly across them.

use std::hint::black_box;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::monitor::{FeatureLayout, FeatureTraceTap, QuantileTap, ReducedQuantileTap};
use crate::net::Network;
use crate::tensor::Tensor4;

/// The measured inference variants, in fixed execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Forward pass without any tap.
    Plain,
    /// Quantile monitor restricted to the reduced feature set.
    Reduced,
    /// Quantile monitor over every layer and percentile.
    Full,
    /// Raw feature-map sums recorded without quantile computation.
    Trace,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Plain, Variant::Reduced, Variant::Full, Variant::Trace];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Reduced => "reduced_monitor",
            Variant::Full => "full_monitor",
            Variant::Trace => "feature_trace",
        }
    }
}

/// Per-variant rep timings; one value is the wall-clock time of one pass
/// over the whole image set, divided by the number of images. Each rep is
/// therefore a mean per-image time, and the median over reps is a
/// median-of-means estimate.
#[derive(Clone, Debug)]
pub struct VariantTiming {
    pub variant: Variant,
    pub seconds: Vec<f64>,
}

/// Location and spread of one variant's per-image times: mean, sample
/// standard deviation, median over reps, a symmetric 95% confidence
/// interval (normal approximation), and the mean's overhead relative to
/// the plain variant (0 for plain itself).
#[derive(Clone, Copy, Debug)]
pub struct VariantSummary {
    pub variant: Variant,
    pub reps: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub vs_plain: f64,
}

/// True when `a`'s confidence interval lies strictly below `b`'s.
pub fn ci_separated(a: &VariantSummary, b: &VariantSummary) -> bool {
    a.ci_hi < b.ci_lo
}

/// Mean, sample standard deviation, and 95% CI half-width.
pub fn mean_ci(xs: &[f64]) -> (f64, f64, f64) {
    assert!(!xs.is_empty());
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let half = 1.96 * sd / n.sqrt();
    (mean, sd, half)
}

fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[derive(Clone, Debug)]
pub struct BenchResult {
    /// Images per rep.
    pub images: usize,
    /// Measured reps per variant (warmup excluded).
    pub reps: usize,
    pub warmup: usize,
    pub variants: Vec<VariantTiming>,
}

impl BenchResult {
    pub fn summaries(&self) -> Vec<VariantSummary> {
        let plain_mean = self
            .variants
            .iter()
            .find(|v| v.variant == Variant::Plain)
            .map(|v| mean_ci(&v.seconds).0)
            .expect("plain variant is always measured");
        self.variants
            .iter()
            .map(|v| {
                let (mean, sd, half) = mean_ci(&v.seconds);
                VariantSummary {
                    variant: v.variant,
                    reps: v.seconds.len(),
                    mean,
                    std: sd,
                    median: median(&v.seconds),
                    ci_lo: mean - half,
                    ci_hi: mean + half,
                    vs_plain: if v.variant == Variant::Plain {
                        0.0
                    } else {
                        mean / plain_mean - 1.0
                    },
                }
            })
            .collect()
    }

    pub fn summary_for(&self, variant: Variant) -> VariantSummary {
        self.summaries()
            .into_iter()
            .find(|s| s.variant == variant)
            .expect("every variant is measured")
    }
}

fn checksum(logits: &Tensor4) -> f32 {
    logits.data().iter().sum()
}

fn run_variant(
    net: &Network,
    images: &[Tensor4],
    layout: FeatureLayout,
    reduced_features: &[usize],
    variant: Variant,
) -> Result<f64> {
    let start = Instant::now();
    let mut acc = 0.0f32;
    for image in images {
        match variant {
            Variant::Plain => {
                let logits = net.forward(image)?;
                acc += checksum(&logits);
            }
            Variant::Reduced => {
                let mut tap = ReducedQuantileTap::new(layout, reduced_features);
                let logits = net.forward_with(image, None, &mut [&mut tap])?;
                acc += checksum(&logits);
                black_box(tap.raw());
            }
            Variant::Full => {
                let mut tap = QuantileTap::new(layout.layers);
                let logits = net.forward_with(image, None, &mut [&mut tap])?;
                acc += checksum(&logits);
                black_box(tap.raw());
            }
            Variant::Trace => {
                let mut tap = FeatureTraceTap::new();
                let logits = net.forward_with(image, None, &mut [&mut tap])?;
                acc += checksum(&logits);
                black_box(tap.sums());
            }
        }
    }
    black_box(acc);
    Ok(start.elapsed().as_secs_f64() / images.len() as f64)
}

/// Time every variant over the image set, `warmup + reps` rounds, keeping
/// the last `reps`. Within a round the variants run back to back in fixed
/// order; a round's value is the elapsed time over all images divided by
/// the image count.
pub fn run_bench(
    net: &Network,
    images: &Tensor4,
    layout: FeatureLayout,
    reduced_features: &[usize],
    reps: usize,
    warmup: usize,
) -> Result<BenchResult> {
    if reps < 10 {
        return Err(Error::config("need at least 10 measured reps"));
    }
    if warmup == 0 {
        return Err(Error::config("need at least one warmup round"));
    }
    if images.n() == 0 {
        return Err(Error::config("need at least one image"));
    }
    if layout.layers != net.conv_layers() {
        return Err(Error::config("feature layout does not match the network"));
    }
    if reduced_features.is_empty() {
        return Err(Error::config("reduced variant needs at least one feature"));
    }
    let samples: Vec<Tensor4> = (0..images.n()).map(|i| images.slice_sample(i)).collect();
    let mut timings: Vec<VariantTiming> = Variant::ALL
        .iter()
        .map(|&variant| VariantTiming {
            variant,
            seconds: Vec::with_capacity(reps),
        })
        .collect();
    for round in 0..warmup + reps {
        for (slot, &variant) in Variant::ALL.iter().enumerate() {
            let secs = run_variant(net, &samples, layout, reduced_features, variant)?;
            if round >= warmup {
                timings[slot].seconds.push(secs);
            }
        }
    }
    Ok(BenchResult {
        images: images.n(),
        reps,
        warmup,
        variants: timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::io::network_from_topology;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_ci_matches_hand_computation() {
        let (mean, sd, half) = mean_ci(&[1.0, 2.0, 3.0, 4.0]);
        assert!((mean - 2.5).abs() < 1e-12);
        assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((half - 1.96 * (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_rep_has_zero_width_interval() {
        let (mean, sd, half) = mean_ci(&[0.25]);
        assert_eq!(mean, 0.25);
        assert_eq!(sd, 0.0);
        assert_eq!(half, 0.0);
    }

    #[test]
    fn ci_separation_requires_a_gap() {
        let a = VariantSummary {
            variant: Variant::Plain,
            reps: 10,
            mean: 1.0,
            std: 0.1,
            median: 1.0,
            ci_lo: 0.9,
            ci_hi: 1.1,
            vs_plain: 0.0,
        };
        let mut b = a;
        b.variant = Variant::Full;
        b.mean = 2.0;
        b.ci_lo = 1.9;
        b.ci_hi = 2.1;
        assert!(ci_separated(&a, &b));
        assert!(!ci_separated(&b, &a));
        b.ci_lo = 1.05;
        assert!(!ci_separated(&a, &b));
    }

    #[test]
    fn bench_measures_every_variant() {
        let net = network_from_topology(
            "input 1 12 12\nconv 4 3x3 pad 1\nrelu\nmaxpool 2\nconv 6 3x3 pad 1\nrelu\nlinear 3\n",
            1,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut images = Tensor4::zeros(3, 1, 12, 12);
        for v in images.data_mut() {
            *v = rand::Rng::random_range(&mut rng, 0.0..1.0);
        }
        let layout = FeatureLayout::new(net.conv_layers());
        let result = run_bench(&net, &images, layout, &[0, 5], 10, 1).unwrap();
        assert_eq!(result.variants.len(), 4);
        for timing in &result.variants {
            assert_eq!(timing.seconds.len(), 10);
            assert!(timing.seconds.iter().all(|&s| s > 0.0));
        }
        let summaries = result.summaries();
        assert_eq!(summaries.len(), 4);
        for s in &summaries {
            assert!(s.mean > 0.0);
            assert!(s.median > 0.0);
            assert!(s.ci_lo <= s.mean && s.mean <= s.ci_hi);
        }
        assert_eq!(summaries[0].variant, Variant::Plain);
        assert_eq!(summaries[0].vs_plain, 0.0);
    }

    #[test]
    fn median_handles_odd_and_even_lengths() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn bench_rejects_bad_parameters() {
        let net = network_from_topology("input 1 8 8\nconv 2 3x3 pad 1\nrelu\nlinear 2\n", 1)
            .unwrap();
        let images = Tensor4::filled(1, 1, 8, 8, 0.5);
        let layout = FeatureLayout::new(1);
        assert!(run_bench(&net, &images, layout, &[], 10, 1).is_err());
        assert!(run_bench(&net, &images, layout, &[0], 9, 1).is_err());
        assert!(run_bench(&net, &images, layout, &[0], 10, 0).is_err());
    }
}
