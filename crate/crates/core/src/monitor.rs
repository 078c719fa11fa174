//! Runtime monitor: per-layer feature-map sums, decile quantile markers,
//! fault-free bounds, and bounded anomaly features.
//!
//! For every conv layer the monitor first collapses each feature map to its
//! spatial sum (in f32, so a binary32 overflow stays observable as an
//! infinity), then summarizes the per-channel sums with eleven decile
//! quantiles. Quantile markers from fault-free runs define per-marker
//! min/max bounds; at detection time each marker is squashed through a
//! tanh-based normalization into (0, 1), where values above 0.5 signal an
//! excursion outside the fault-free envelope.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::net::{ConvMutator, ConvTap, Network};
use crate::tensor::Tensor4;

/// Percentile grid of the quantile markers.
pub const PERCENTILES: [u8; 11] = [0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100];

/// Epsilon guarding the normalization denominators.
pub const NORM_EPS: f64 = 1e-8;

/// Maps (conv layer, percentile) pairs to flat vector indices.
///
/// The layout is percentile-major: `index = p_idx * layers + (layer - 1)`,
/// so a feature vector begins with the p=0 markers of all layers, then the
/// p=10 markers, and so on. Layers are 1-based throughout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    pub layers: usize,
}

impl FeatureLayout {
    pub fn new(layers: usize) -> FeatureLayout {
        assert!(layers > 0, "need at least one conv layer");
        FeatureLayout { layers }
    }

    pub fn len(&self) -> usize {
        self.layers * PERCENTILES.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, layer: usize, p_idx: usize) -> usize {
        assert!(
            layer >= 1 && layer <= self.layers && p_idx < PERCENTILES.len(),
            "feature (layer={}, p_idx={}) outside layout with {} layers",
            layer,
            p_idx,
            self.layers
        );
        p_idx * self.layers + (layer - 1)
    }

    /// Inverse of `index`: returns (layer, p_idx).
    pub fn decode(&self, i: usize) -> (usize, usize) {
        assert!(i < self.len(), "feature index {} out of range", i);
        (i % self.layers + 1, i / self.layers)
    }

    /// Human-readable feature name, e.g. `q[layer=2][p=40]`.
    pub fn name(&self, i: usize) -> String {
        let (layer, p_idx) = self.decode(i);
        format!("q[layer={}][p={}]", layer, PERCENTILES[p_idx])
    }
}

/// Spatial sum of every feature map of one sample, accumulated in f32 in
/// storage order.
pub fn feature_sums(t: &Tensor4, sample: usize) -> Vec<f32> {
    (0..t.c())
        .map(|c| t.map(sample, c).iter().sum::<f32>())
        .collect()
}

/// Linear-interpolation quantile of an ascending-sorted slice, `q` in [0,1].
pub fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q), "quantile level {} outside [0,1]", q);
    let n = xs.len();
    if n == 1 {
        return xs[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi || xs[lo] == xs[hi] {
        // Also keeps infinite samples intact; the interpolation arithmetic
        // would turn them into inf - inf = NaN.
        return xs[lo];
    }
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

/// The eleven decile quantiles of a layer's per-channel sums, computed in
/// f64. Non-finite sums sort last, so a corrupted layer surfaces as
/// non-finite upper quantiles.
pub fn layer_quantiles(sums: &[f32]) -> Vec<f64> {
    let mut xs: Vec<f64> = sums.iter().map(|&v| v as f64).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    PERCENTILES
        .iter()
        .map(|&p| quantile_sorted(&xs, p as f64 / 100.0))
        .collect()
}

/// Per-marker min/max envelope of fault-free quantile vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileBounds {
    pub layout: FeatureLayout,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl QuantileBounds {
    /// Elementwise min/max over fault-free raw-quantile rows.
    pub fn from_rows<'a, I>(layout: FeatureLayout, rows: I) -> Result<QuantileBounds>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut min = vec![f64::INFINITY; layout.len()];
        let mut max = vec![f64::NEG_INFINITY; layout.len()];
        let mut count = 0usize;
        for row in rows {
            if row.len() != layout.len() {
                return Err(Error::config(format!(
                    "bounds row has {} markers, layout expects {}",
                    row.len(),
                    layout.len()
                )));
            }
            for (i, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::config(
                        "bounds rows must be fault-free (finite markers)",
                    ));
                }
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::config("bounds need at least one row"));
        }
        Ok(QuantileBounds { layout, min, max })
    }
}

/// Squash a marker against its fault-free envelope.
///
/// In-range values map to (-1, 0]; the output grows toward +1 the further
/// the marker sits outside [amin, amax] on either side.
pub fn f_norm(a: f64, amin: f64, amax: f64) -> f64 {
    if a >= amin {
        ((a - amax) / (amax.abs() + NORM_EPS)).tanh()
    } else {
        ((amin - a) / (amin.abs() + NORM_EPS)).tanh()
    }
}

/// Shift the squashed markers into (0, 1): in-envelope values land at or
/// below 0.5, excursions above it.
pub fn anomaly_vector(raw: &[f64], bounds: &QuantileBounds) -> Vec<f64> {
    assert_eq!(raw.len(), bounds.layout.len(), "marker count mismatch");
    raw.iter()
        .enumerate()
        .map(|(i, &a)| 0.5 * (f_norm(a, bounds.min[i], bounds.max[i]) + 1.0))
        .collect()
}

/// Tap computing the full quantile-marker vector during one forward pass.
pub struct QuantileTap {
    layout: FeatureLayout,
    raw: Vec<f64>,
    due: bool,
}

impl QuantileTap {
    pub fn new(conv_layers: usize) -> QuantileTap {
        let layout = FeatureLayout::new(conv_layers);
        QuantileTap {
            layout,
            raw: vec![f64::NAN; layout.len()],
            due: false,
        }
    }

    /// Raw quantile markers in layout order (NaN for unseen layers).
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn into_raw(self) -> Vec<f64> {
        self.raw
    }

    /// True once any monitored sum came out non-finite.
    pub fn due(&self) -> bool {
        self.due
    }
}

impl ConvTap for QuantileTap {
    fn on_conv(&mut self, layer: usize, output: &Tensor4) {
        assert_eq!(output.n(), 1, "monitor taps expect single-image batches");
        let sums = feature_sums(output, 0);
        if sums.iter().any(|s| !s.is_finite()) {
            self.due = true;
        }
        for (p_idx, v) in layer_quantiles(&sums).into_iter().enumerate() {
            self.raw[self.layout.index(layer, p_idx)] = v;
        }
    }
}

/// Tap monitoring only the layers and percentiles a reduced detector uses.
///
/// Layers without any selected marker are skipped entirely, so the tap's
/// cost scales with the reduced feature set. The output vector keeps the
/// full layout with NaN at unmonitored positions, which lets reduced trees
/// keep addressing features by their global index.
pub struct ReducedQuantileTap {
    layout: FeatureLayout,
    wanted: BTreeMap<usize, Vec<usize>>,
    raw: Vec<f64>,
    due: bool,
}

impl ReducedQuantileTap {
    pub fn new(layout: FeatureLayout, feature_indices: &[usize]) -> ReducedQuantileTap {
        let mut wanted: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in feature_indices {
            let (layer, p_idx) = layout.decode(i);
            let ps = wanted.entry(layer).or_default();
            if !ps.contains(&p_idx) {
                ps.push(p_idx);
            }
        }
        for ps in wanted.values_mut() {
            ps.sort_unstable();
        }
        ReducedQuantileTap {
            layout,
            wanted,
            raw: vec![f64::NAN; layout.len()],
            due: false,
        }
    }

    /// Conv layers this tap actually touches.
    pub fn monitored_layers(&self) -> Vec<usize> {
        self.wanted.keys().copied().collect()
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn into_raw(self) -> Vec<f64> {
        self.raw
    }

    pub fn due(&self) -> bool {
        self.due
    }
}

impl ConvTap for ReducedQuantileTap {
    fn on_conv(&mut self, layer: usize, output: &Tensor4) {
        let Some(p_idxs) = self.wanted.get(&layer) else {
            return;
        };
        assert_eq!(output.n(), 1, "monitor taps expect single-image batches");
        let sums = feature_sums(output, 0);
        if sums.iter().any(|s| !s.is_finite()) {
            self.due = true;
        }
        let mut xs: Vec<f64> = sums.iter().map(|&v| v as f64).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        for &p_idx in p_idxs {
            let q = quantile_sorted(&xs, PERCENTILES[p_idx] as f64 / 100.0);
            self.raw[self.layout.index(layer, p_idx)] = q;
        }
    }
}

/// Tap recording every per-channel sum verbatim, the feature-map tracing
/// baseline the quantile monitor is benchmarked against.
#[derive(Default)]
pub struct FeatureTraceTap {
    sums: Vec<(usize, Vec<f32>)>,
}

impl FeatureTraceTap {
    pub fn new() -> FeatureTraceTap {
        FeatureTraceTap::default()
    }

    pub fn sums(&self) -> &[(usize, Vec<f32>)] {
        &self.sums
    }
}

impl ConvTap for FeatureTraceTap {
    fn on_conv(&mut self, layer: usize, output: &Tensor4) {
        assert_eq!(output.n(), 1, "monitor taps expect single-image batches");
        self.sums.push((layer, feature_sums(output, 0)));
    }
}

/// Result of one monitored single-image inference.
#[derive(Clone, Debug)]
pub struct Monitored {
    pub logits: Vec<f32>,
    /// Predicted class; `None` when the run is a DUE.
    pub top1: Option<usize>,
    /// Raw quantile markers, percentile-major layout.
    pub raw_quantiles: Vec<f64>,
    /// True when any monitored sum or logit is non-finite.
    pub due: bool,
}

/// Run one image through the network with the full quantile monitor
/// attached, optionally under a transient conv-output fault.
pub fn monitored_forward(
    net: &Network,
    input: &Tensor4,
    mutator: Option<&dyn ConvMutator>,
) -> Result<Monitored> {
    if input.n() != 1 {
        return Err(Error::config("monitored_forward expects a single image"));
    }
    let mut tap = QuantileTap::new(net.conv_layers());
    let out = net.forward_with(input, mutator, &mut [&mut tap])?;
    let logits = out.sample(0).to_vec();
    let due = tap.due() || logits.iter().any(|v| !v.is_finite());
    let top1 = if due {
        None
    } else {
        Some(crate::net::top1(&logits)?)
    };
    Ok(Monitored {
        logits,
        top1,
        raw_quantiles: tap.into_raw(),
        due,
    })
}
