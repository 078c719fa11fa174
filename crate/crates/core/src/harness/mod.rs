//! Experiment harness: campaign configuration, the fault-injection
//! campaign itself, image-level splits, and the reseeded detector
//! pipeline.

pub mod bench;
pub mod dataset;
pub mod report;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corruption::{
    apply_contrast, apply_gaussian_blur, apply_gaussian_noise, sample_fault_spec, FaultClass,
    FaultSpec, ImageBatch, Magnitude, MemoryFlavor, NeuronFault, WeightFault,
};
use crate::detector::eval::{evaluate_tree, EvalReport};
use crate::detector::{LabeledDataset, TreeParams};
use crate::error::{Error, Result};
use crate::monitor::{anomaly_vector, monitored_forward, FeatureLayout, Monitored, QuantileBounds};
use crate::net::Network;
use crate::reduction::{reduce_features, DepthMode, MinimalPool, Reduction};
use crate::tensor::Tensor4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a base seed and a tag path.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    s
}

const STREAM_IMAGE: u64 = 1;
const STREAM_DEDICATED: u64 = 2;
const STREAM_SPLIT: u64 = 3;
const STREAM_SWEEP: u64 = 4;

/// Alphas tried by the automatic pruning sweep.
pub const SWEEP_ALPHAS: [f64; 5] = [1.0e-5, 1.25e-5, 1.5e-5, 1.75e-5, 2.0e-5];

fn default_images() -> usize {
    100
}
fn default_fis() -> usize {
    100
}
fn default_accelerated() -> usize {
    500
}
fn default_classes() -> Vec<String> {
    vec![
        "noise".to_string(),
        "blur".to_string(),
        "contrast".to_string(),
        "memory".to_string(),
    ]
}
fn default_noise() -> [f64; 3] {
    [0.1, 1.0, 10.0]
}
fn default_blur() -> [f64; 3] {
    [0.3, 1.0, 3.0]
}
fn default_contrast() -> [f64; 3] {
    [0.8, 0.4, 0.1]
}
fn default_pixel_scale() -> f64 {
    1.0 / 255.0
}
fn default_balance() -> f64 {
    2.0
}
fn default_train_fraction() -> f64 {
    2.0 / 3.0
}
fn default_bounds_fraction() -> f64 {
    0.2
}
fn default_retrain_seeds() -> usize {
    10
}
fn default_retention() -> f64 {
    0.95
}
fn default_search_depth() -> usize {
    24
}
fn default_depth_mode() -> String {
    "rounds".to_string()
}

/// Shape of one fault-injection experiment. Loads from TOML; every field
/// has a default matching the standard experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    /// Number of images drawn from the front of the campaign image set.
    #[serde(default = "default_images")]
    pub images: usize,
    /// Random fault injections per image.
    #[serde(default = "default_fis")]
    pub fis_per_image: usize,
    /// Accelerated memory-fault epochs (one injection per image each).
    #[serde(default = "default_accelerated")]
    pub accelerated_epochs: usize,
    /// Enabled fault classes for the random injections.
    #[serde(default = "default_classes")]
    pub classes: Vec<String>,
    /// Noise sigmas in pixel-scale units.
    #[serde(default = "default_noise")]
    pub noise_magnitudes: [f64; 3],
    /// Blur kernel sigmas.
    #[serde(default = "default_blur")]
    pub blur_sigmas: [f64; 3],
    /// Contrast factors (1 = identity).
    #[serde(default = "default_contrast")]
    pub contrast_factors: [f64; 3],
    /// Scale of one noise magnitude unit.
    #[serde(default = "default_pixel_scale")]
    pub pixel_scale: f64,
    /// Target ratio of injected-fault records to dedicated fault-free
    /// records.
    #[serde(default = "default_balance")]
    pub balance_target: f64,
    /// Master seed for sampling, splits, and reseeded retrainings.
    #[serde(default)]
    pub seed: u64,
    /// Image-level train share of the detector split.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Share of train images whose fault-free markers define the bounds.
    #[serde(default = "default_bounds_fraction")]
    pub bounds_fraction: f64,
    /// Number of reseeded retrainings to average over.
    #[serde(default = "default_retrain_seeds")]
    pub retrain_seeds: usize,
    /// Pruning strength; omit to sweep automatically once per pipeline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccp_alpha: Option<f64>,
    /// Fraction of the baseline scores a reduced model must retain.
    #[serde(default = "default_retention")]
    pub retention: f64,
    /// Depth budget of the minimal-set search.
    #[serde(default = "default_search_depth")]
    pub search_depth: usize,
    /// What the search depth counts: "rounds" or "features".
    #[serde(default = "default_depth_mode")]
    pub depth_mode: String,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config must deserialize from defaults")
    }
}

impl CampaignConfig {
    pub fn from_toml_str(text: &str) -> Result<CampaignConfig> {
        let cfg: CampaignConfig =
            toml::from_str(text).map_err(|e| Error::parse(format!("campaign config: {}", e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::parse(format!("campaign config: {}", e)))
    }

    pub fn load(path: &std::path::Path) -> Result<CampaignConfig> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn fault_classes(&self) -> Result<Vec<FaultClass>> {
        let mut out = Vec::new();
        for name in &self.classes {
            let class = FaultClass::from_str(name)?;
            if class == FaultClass::None {
                return Err(Error::config("'none' cannot be an injected fault class"));
            }
            if !out.contains(&class) {
                out.push(class);
            }
        }
        if out.is_empty() {
            return Err(Error::config("at least one fault class must be enabled"));
        }
        Ok(out)
    }

    pub fn depth_mode(&self) -> Result<DepthMode> {
        DepthMode::from_str(&self.depth_mode)
    }

    pub fn validate(&self) -> Result<()> {
        if self.images == 0 {
            return Err(Error::config("images must be positive"));
        }
        if self.fis_per_image + self.accelerated_epochs == 0 {
            return Err(Error::config("campaign needs at least one injection per image"));
        }
        self.fault_classes()?;
        self.depth_mode()?;
        if self.noise_magnitudes.iter().any(|&v| v < 0.0) {
            return Err(Error::config("noise magnitudes must be nonnegative"));
        }
        if self.blur_sigmas.iter().any(|&v| v <= 0.0) {
            return Err(Error::config("blur sigmas must be positive"));
        }
        if self.contrast_factors.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::config("contrast factors must lie in [0,1]"));
        }
        if self.pixel_scale <= 0.0 {
            return Err(Error::config("pixel scale must be positive"));
        }
        if !(1.5..=3.0).contains(&self.balance_target) {
            return Err(Error::config("balance target must lie in [1.5, 3.0]"));
        }
        if !(0.0..1.0).contains(&self.train_fraction) || self.train_fraction <= 0.0 {
            return Err(Error::config("train fraction must lie in (0,1)"));
        }
        if !(0.0..=1.0).contains(&self.bounds_fraction) || self.bounds_fraction <= 0.0 {
            return Err(Error::config("bounds fraction must lie in (0,1]"));
        }
        if self.retrain_seeds == 0 {
            return Err(Error::config("need at least one retraining seed"));
        }
        if let Some(a) = self.ccp_alpha {
            if !(a >= 0.0) {
                return Err(Error::config("ccp_alpha must be nonnegative"));
            }
        }
        if !(0.0..=1.0).contains(&self.retention) || self.retention <= 0.0 {
            return Err(Error::config("retention must lie in (0,1]"));
        }
        if self.search_depth == 0 {
            return Err(Error::config("search depth must be positive"));
        }
        Ok(())
    }

    /// Concrete magnitude value of an input-corruption step.
    pub fn magnitude_value(&self, class: FaultClass, magnitude: Magnitude) -> Result<f64> {
        let table = match class {
            FaultClass::Noise => &self.noise_magnitudes,
            FaultClass::Blur => &self.blur_sigmas,
            FaultClass::Contrast => &self.contrast_factors,
            other => {
                return Err(Error::config(format!(
                    "{} faults have no magnitude table",
                    other.as_str()
                )))
            }
        };
        Ok(table[magnitude.index()])
    }
}

/// Which part of the campaign produced a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    /// Random fault injections over the enabled classes.
    Standard,
    /// Accelerated memory-fault epochs (high exponent bits only).
    Accelerated,
    /// Dedicated fault-free inferences added for class balance.
    Dedicated,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Standard => "standard",
            Phase::Accelerated => "accelerated",
            Phase::Dedicated => "dedicated",
        }
    }

    pub fn from_str(s: &str) -> Result<Phase> {
        match s {
            "standard" => Ok(Phase::Standard),
            "accelerated" => Ok(Phase::Accelerated),
            "dedicated" => Ok(Phase::Dedicated),
            other => Err(Error::parse(format!("unknown phase '{}'", other))),
        }
    }
}

/// One monitored inference of the campaign.
#[derive(Clone, Debug)]
pub struct OutcomeRecord {
    pub image_id: usize,
    /// Class of the underlying dataset image (not the fault label).
    pub image_class: u8,
    pub phase: Phase,
    /// Injection slot within the phase.
    pub fi: usize,
    pub spec: FaultSpec,
    pub due: bool,
    pub ref_top1: usize,
    /// Predicted class of the faulty run; absent for DUEs.
    pub faulty_top1: Option<usize>,
    /// Detector label; absent for DUEs, `FaultClass::None` for masked and
    /// fault-free runs.
    pub label: Option<FaultClass>,
    /// Raw quantile markers, percentile-major; may be non-finite for DUEs.
    pub raw_quantiles: Vec<f64>,
}

/// Label one faulty inference against the image's fault-free reference.
///
/// A non-finite monitor sum or logit is a DUE and gets no label. Otherwise
/// the record is an SDC labeled with the injected class when the top-1
/// prediction changed, and a masked run labeled `None` when it did not.
pub fn label_outcome(
    injected: FaultClass,
    ref_top1: usize,
    faulty: &Monitored,
) -> (bool, Option<usize>, Option<FaultClass>) {
    if faulty.due {
        return (true, None, None);
    }
    let top1 = faulty.top1.expect("non-DUE inference must have a prediction");
    let label = if top1 != ref_top1 { injected } else { FaultClass::None };
    (false, Some(top1), Some(label))
}

/// Full campaign output.
#[derive(Clone, Debug)]
pub struct Campaign {
    pub layout: FeatureLayout,
    pub n_images: usize,
    /// Dataset class per campaign image.
    pub image_classes: Vec<u8>,
    /// Records sorted by (image, phase, slot).
    pub records: Vec<OutcomeRecord>,
}

/// Tallies used by reports and balance checks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub records: usize,
    pub due: usize,
    /// Usable (non-DUE) records with an injected fault.
    pub faulty: usize,
    /// Usable records without any fault (dedicated runs).
    pub fault_free: usize,
    /// faulty : fault_free.
    pub balance_ratio: f64,
    /// Usable records per detector label.
    pub label_counts: Vec<(String, usize)>,
    /// All records per phase.
    pub phase_counts: Vec<(String, usize)>,
}

impl Campaign {
    pub fn summary(&self) -> CampaignSummary {
        let mut due = 0usize;
        let mut faulty = 0usize;
        let mut fault_free = 0usize;
        let mut labels: BTreeMap<FaultClass, usize> = BTreeMap::new();
        let mut phases: BTreeMap<Phase, usize> = BTreeMap::new();
        for r in &self.records {
            *phases.entry(r.phase).or_default() += 1;
            if r.due {
                due += 1;
                continue;
            }
            if r.spec.class == FaultClass::None {
                fault_free += 1;
            } else {
                faulty += 1;
            }
            *labels.entry(r.label.expect("non-DUE records are labeled")).or_default() += 1;
        }
        CampaignSummary {
            records: self.records.len(),
            due,
            faulty,
            fault_free,
            balance_ratio: if fault_free > 0 {
                faulty as f64 / fault_free as f64
            } else {
                f64::INFINITY
            },
            label_counts: labels
                .into_iter()
                .map(|(k, v)| (k.as_str().to_string(), v))
                .collect(),
            phase_counts: phases
                .into_iter()
                .map(|(k, v)| (k.as_str().to_string(), v))
                .collect(),
        }
    }
}

fn run_injection(
    net: &Network,
    local_net: &mut Option<Network>,
    image: &Tensor4,
    spec: &FaultSpec,
    cfg: &CampaignConfig,
) -> Result<Monitored> {
    match spec.class {
        FaultClass::None => monitored_forward(net, image, None),
        FaultClass::Noise | FaultClass::Blur | FaultClass::Contrast => {
            let magnitude = spec
                .magnitude
                .ok_or_else(|| Error::config("input fault without magnitude"))?;
            let value = cfg.magnitude_value(spec.class, magnitude)?;
            let batch = ImageBatch::new(image.clone())?;
            let corrupted = match spec.class {
                FaultClass::Noise => {
                    apply_gaussian_noise(&batch, value, cfg.pixel_scale, spec.seed)?
                }
                FaultClass::Blur => apply_gaussian_blur(&batch, value)?,
                _ => apply_contrast(&batch, value)?,
            };
            monitored_forward(net, corrupted.tensor(), None)
        }
        FaultClass::Memory => {
            let mem = spec
                .memory
                .ok_or_else(|| Error::config("memory fault without location"))?;
            match mem.flavor {
                MemoryFlavor::Weight => {
                    let patched = local_net.get_or_insert_with(|| net.clone());
                    let fault = WeightFault {
                        layer: mem.layer,
                        coord: mem.coord,
                        bit: mem.bit,
                    };
                    fault.apply(patched)?;
                    let out = monitored_forward(patched, image, None);
                    fault.apply(patched)?;
                    out
                }
                MemoryFlavor::Neuron => {
                    let fault = NeuronFault {
                        layer: mem.layer,
                        coord: [mem.coord[0], mem.coord[1], mem.coord[2]],
                        bit: mem.bit,
                    };
                    monitored_forward(net, image, Some(&fault))
                }
            }
        }
    }
}

/// Run the full injection campaign over the first `cfg.images` images.
///
/// Per image: one cached fault-free reference (a DUE here aborts, the
/// pristine model must be clean), `fis_per_image` random injections over
/// the enabled classes, and one accelerated memory injection per
/// accelerated epoch. Afterwards dedicated fault-free records are added,
/// spread round-robin across images, until injected and fault-free record
/// counts reach the balance target; the final ratio must land in
/// [1.5, 3.0] : 1.
pub fn run_campaign(
    net: &Network,
    images: &Tensor4,
    image_classes: &[u8],
    cfg: &CampaignConfig,
) -> Result<Campaign> {
    cfg.validate()?;
    if images.n() < cfg.images || image_classes.len() < cfg.images {
        return Err(Error::config(format!(
            "campaign wants {} images, got {}",
            cfg.images,
            images.n().min(image_classes.len())
        )));
    }
    let enabled = cfg.fault_classes()?;
    let memory_only = [FaultClass::Memory];
    let sites = net.conv_sites()?;
    let layout = FeatureLayout::new(net.conv_layers());
    let pristine_hash = net.weights_hash();

    let per_image: Vec<(Vec<OutcomeRecord>, Monitored)> = (0..cfg.images)
        .into_par_iter()
        .map(|i| -> Result<(Vec<OutcomeRecord>, Monitored)> {
            let image = images.slice_sample(i);
            let reference = monitored_forward(net, &image, None)?;
            if reference.due {
                return Err(Error::Due(format!(
                    "fault-free reference inference for image {} is non-finite",
                    i
                )));
            }
            let ref_top1 = reference.top1.expect("clean reference has a prediction");
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[STREAM_IMAGE, i as u64]));
            let mut local_net: Option<Network> = None;
            let mut records = Vec::with_capacity(cfg.fis_per_image + cfg.accelerated_epochs);
            for (phase, classes, count) in [
                (Phase::Standard, enabled.as_slice(), cfg.fis_per_image),
                (Phase::Accelerated, memory_only.as_slice(), cfg.accelerated_epochs),
            ] {
                for fi in 0..count {
                    let accelerated = phase == Phase::Accelerated;
                    let spec = sample_fault_spec(classes, &sites, accelerated, &mut rng)?;
                    let monitored = run_injection(net, &mut local_net, &image, &spec, cfg)?;
                    let (due, faulty_top1, label) =
                        label_outcome(spec.class, ref_top1, &monitored);
                    records.push(OutcomeRecord {
                        image_id: i,
                        image_class: image_classes[i],
                        phase,
                        fi,
                        spec,
                        due,
                        ref_top1,
                        faulty_top1,
                        label,
                        raw_quantiles: monitored.raw_quantiles,
                    });
                }
            }
            if let Some(patched) = &local_net {
                if patched.weights_hash() != pristine_hash {
                    return Err(Error::config(format!(
                        "weight faults for image {} were not fully reverted",
                        i
                    )));
                }
            }
            Ok((records, reference))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records: Vec<OutcomeRecord> = Vec::new();
    let mut references = Vec::with_capacity(cfg.images);
    for (recs, reference) in per_image {
        records.extend(recs);
        references.push(reference);
    }

    let faulty = records
        .iter()
        .filter(|r| !r.due && r.spec.class != FaultClass::None)
        .count();
    let existing_fault_free = records
        .iter()
        .filter(|r| !r.due && r.spec.class == FaultClass::None)
        .count();
    let target = (faulty as f64 / cfg.balance_target).round() as usize;
    // Every image must contribute at least one fault-free record so any
    // bounds subset has markers to draw from.
    let dedicated = target.saturating_sub(existing_fault_free).max(cfg.images);
    let base = dedicated / cfg.images;
    let extra = dedicated % cfg.images;
    for i in 0..cfg.images {
        let reference = &references[i];
        let ref_top1 = reference.top1.expect("clean reference has a prediction");
        for slot in 0..base + usize::from(i < extra) {
            records.push(OutcomeRecord {
                image_id: i,
                image_class: image_classes[i],
                phase: Phase::Dedicated,
                fi: slot,
                spec: FaultSpec::fault_free(derive_seed(
                    cfg.seed,
                    &[STREAM_DEDICATED, i as u64, slot as u64],
                )),
                due: false,
                ref_top1,
                faulty_top1: Some(ref_top1),
                label: Some(FaultClass::None),
                raw_quantiles: reference.raw_quantiles.clone(),
            });
        }
    }
    records.sort_by_key(|r| (r.image_id, r.phase, r.fi));

    let campaign = Campaign {
        layout,
        n_images: cfg.images,
        image_classes: image_classes[..cfg.images].to_vec(),
        records,
    };
    let summary = campaign.summary();
    if !(1.5..=3.0).contains(&summary.balance_ratio) {
        return Err(Error::config(format!(
            "campaign balance {:.3}:1 fell outside [1.5, 3.0]:1 ({} faulty, {} fault-free)",
            summary.balance_ratio, summary.faulty, summary.fault_free
        )));
    }
    Ok(campaign)
}

/// Image-level split for one retraining seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitIndices {
    pub train_images: Vec<usize>,
    pub test_images: Vec<usize>,
    /// Subset of the train images whose fault-free markers set the bounds.
    pub bounds_images: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Stratified image-level split: every dataset class is divided by
/// `train_fraction` independently, then a `bounds_fraction` share of the
/// train side is picked for bounds extraction. Faults never cross the
/// image boundary, so splitting by image keeps train and test disjoint.
pub fn split_dataset(
    image_classes: &[u8],
    train_fraction: f64,
    bounds_fraction: f64,
    seed: u64,
) -> Result<SplitIndices> {
    if image_classes.is_empty() {
        return Err(Error::config("cannot split zero images"));
    }
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::config("train fraction must lie in (0,1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &c) in image_classes.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    let mut warnings = Vec::new();
    let mut train_images = Vec::new();
    let mut test_images = Vec::new();
    for (&class, ids) in groups.iter_mut() {
        ids.shuffle(&mut rng);
        let n = ids.len();
        let n_train = if n == 1 {
            warnings.push(format!(
                "class {} has a single image; it goes to the train side",
                class
            ));
            1
        } else {
            ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1)
        };
        if n < 3 {
            warnings.push(format!("class {} has only {} images", class, n));
        }
        train_images.extend_from_slice(&ids[..n_train]);
        test_images.extend_from_slice(&ids[n_train..]);
    }
    train_images.sort_unstable();
    test_images.sort_unstable();

    let n_bounds = ((train_images.len() as f64 * bounds_fraction).round() as usize)
        .clamp(1, train_images.len());
    // Draw the bounds subset round-robin over classes so the fault-free
    // envelope brackets every class signature even when the subset is
    // small; a plain random pick routinely misses entire classes.
    let mut class_pools: Vec<Vec<usize>> = groups
        .values()
        .map(|ids| {
            let mut pool: Vec<usize> = ids
                .iter()
                .copied()
                .filter(|i| train_images.binary_search(i).is_ok())
                .collect();
            pool.shuffle(&mut rng);
            pool
        })
        .collect();
    class_pools.shuffle(&mut rng);
    let mut bounds_images = Vec::with_capacity(n_bounds);
    while bounds_images.len() < n_bounds {
        let mut took_any = false;
        for pool in class_pools.iter_mut() {
            if bounds_images.len() == n_bounds {
                break;
            }
            if let Some(i) = pool.pop() {
                bounds_images.push(i);
                took_any = true;
            }
        }
        if !took_any {
            break;
        }
    }
    bounds_images.sort_unstable();

    // Per-class share sanity: the train share of each class should sit
    // within 10 points of the requested fraction.
    for (&class, ids) in &groups {
        let in_train = ids.iter().filter(|i| train_images.binary_search(i).is_ok()).count();
        let share = in_train as f64 / ids.len() as f64;
        if (share - train_fraction).abs() > 0.10 {
            warnings.push(format!(
                "class {} train share {:.2} deviates from {:.2}",
                class, share, train_fraction
            ));
        }
    }

    Ok(SplitIndices {
        train_images,
        test_images,
        bounds_images,
        warnings,
    })
}

/// Detector-ready view of the campaign under one split seed.
pub struct SeedData {
    pub split: SplitIndices,
    pub bounds: QuantileBounds,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Recompute bounds and anomaly features for one split seed. Records keep
/// their raw markers, so reseeding only moves images between sides and
/// re-derives the features; no inference is repeated.
pub fn build_seed_data(campaign: &Campaign, cfg: &CampaignConfig, split_seed: u64) -> Result<SeedData> {
    let split = split_dataset(
        &campaign.image_classes,
        cfg.train_fraction,
        cfg.bounds_fraction,
        split_seed,
    )?;
    build_seed_data_with_split(campaign, split)
}

/// As `build_seed_data` but with an explicit split (used by the sweep).
pub fn build_seed_data_with_split(campaign: &Campaign, split: SplitIndices) -> Result<SeedData> {
    let n = campaign.n_images;
    let mut in_train = vec![false; n];
    let mut in_test = vec![false; n];
    let mut in_bounds = vec![false; n];
    for &i in &split.train_images {
        in_train[i] = true;
    }
    for &i in &split.test_images {
        in_test[i] = true;
    }
    for &i in &split.bounds_images {
        in_bounds[i] = true;
    }

    let bounds_rows: Vec<&[f64]> = campaign
        .records
        .iter()
        .filter(|r| {
            !r.due && r.spec.class == FaultClass::None && in_bounds[r.image_id]
        })
        .map(|r| r.raw_quantiles.as_slice())
        .collect();
    let bounds = QuantileBounds::from_rows(campaign.layout, bounds_rows)?;

    let mut train = LabeledDataset::new(campaign.layout.len(), FaultClass::COUNT);
    let mut test = LabeledDataset::new(campaign.layout.len(), FaultClass::COUNT);
    for r in &campaign.records {
        if r.due {
            continue;
        }
        let side = if in_train[r.image_id] {
            &mut train
        } else if in_test[r.image_id] {
            &mut test
        } else {
            continue;
        };
        let features = anomaly_vector(&r.raw_quantiles, &bounds);
        let label = r.label.expect("non-DUE records are labeled").index();
        side.push_row(&features, label)?;
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::config("split produced an empty detector dataset"));
    }
    Ok(SeedData {
        split,
        bounds,
        train,
        test,
    })
}

/// Per-seed pipeline outcome.
pub struct SeedOutcome {
    pub seed_index: usize,
    pub split_seed: u64,
    /// Scores of the full detector on the held-out side.
    pub eval: EvalReport,
    /// Full tree plus the per-k reduction retrains for this seed.
    pub reduction: Reduction,
    pub full_row: MetricsRow,
    pub reduced_row: MetricsRow,
    pub n_train: usize,
    pub n_test: usize,
}

/// One row of the metrics table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub p_cls: f64,
    pub r_cls: f64,
    pub p_cat: f64,
    pub r_cat: f64,
    pub p_sdc: f64,
    pub r_sdc: f64,
    pub n_ft: f64,
    pub n_l: f64,
}

impl MetricsRow {
    fn from_eval(eval: &EvalReport, n_ft: usize, n_l: usize) -> MetricsRow {
        MetricsRow {
            p_cls: eval.cls.precision,
            r_cls: eval.cls.recall,
            p_cat: eval.cat.precision,
            r_cat: eval.cat.recall,
            p_sdc: eval.sdc.precision,
            r_sdc: eval.sdc.recall,
            n_ft: n_ft as f64,
            n_l: n_l as f64,
        }
    }

    fn fields(&self) -> [f64; 8] {
        [
            self.p_cls, self.r_cls, self.p_cat, self.r_cat, self.p_sdc, self.r_sdc, self.n_ft,
            self.n_l,
        ]
    }

    fn from_fields(f: [f64; 8]) -> MetricsRow {
        MetricsRow {
            p_cls: f[0],
            r_cls: f[1],
            p_cat: f[2],
            r_cat: f[3],
            p_sdc: f[4],
            r_sdc: f[5],
            n_ft: f[6],
            n_l: f[7],
        }
    }
}

/// Mean and sample standard deviation over rows.
pub fn mean_std(rows: &[MetricsRow]) -> (MetricsRow, MetricsRow) {
    assert!(!rows.is_empty());
    let n = rows.len() as f64;
    let mut mean = [0.0f64; 8];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.fields()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = [0.0f64; 8];
    if rows.len() > 1 {
        for r in rows {
            for ((v, m), x) in var.iter_mut().zip(mean).zip(r.fields()) {
                *v += (x - m) * (x - m);
            }
        }
        for v in &mut var {
            *v /= n - 1.0;
        }
    }
    (
        MetricsRow::from_fields(mean),
        MetricsRow::from_fields(var.map(f64::sqrt)),
    )
}

/// Output of the reseeded pipeline.
pub struct PipelineResult {
    /// Pruning strength used everywhere (configured or swept).
    pub alpha: f64,
    /// (alpha, objective) pairs when the sweep ran.
    pub sweep: Option<Vec<(f64, f64)>>,
    pub seeds: Vec<SeedOutcome>,
    pub full_mean: MetricsRow,
    pub full_std: MetricsRow,
    pub reduced_mean: MetricsRow,
    pub reduced_std: MetricsRow,
}

impl PipelineResult {
    /// The seed-0 outcome, the one exported as tree/rules artifacts.
    pub fn primary(&self) -> &SeedOutcome {
        &self.seeds[0]
    }
}

/// The per-seed split seeds a config derives for its retrainings.
pub fn split_seeds(cfg: &CampaignConfig) -> Vec<u64> {
    (0..cfg.retrain_seeds)
        .map(|s| derive_seed(cfg.seed, &[STREAM_SPLIT, s as u64]))
        .collect()
}

fn sweep_alpha(campaign: &Campaign, cfg: &CampaignConfig, seed0: u64) -> Result<Vec<(f64, f64)>> {
    let data = build_seed_data(campaign, cfg, seed0)?;
    // Re-split the seed-0 train images 80/20 for validation.
    let mut imgs = data.split.train_images.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[STREAM_SWEEP]));
    imgs.shuffle(&mut rng);
    let n_val = ((imgs.len() as f64 * 0.2).round() as usize).clamp(1, imgs.len() - 1);
    let mut val_images = imgs[..n_val].to_vec();
    let mut sub_train_images = imgs[n_val..].to_vec();
    val_images.sort_unstable();
    sub_train_images.sort_unstable();
    let sub = build_seed_data_with_split(
        campaign,
        SplitIndices {
            train_images: sub_train_images,
            test_images: val_images,
            bounds_images: data.split.bounds_images.clone(),
            warnings: Vec::new(),
        },
    )?;
    let mut out = Vec::new();
    for alpha in SWEEP_ALPHAS {
        let tree = crate::detector::fit_tree(
            &sub.train,
            &TreeParams {
                ccp_alpha: alpha,
                allowed_features: None,
                seed: seed0,
            },
        )?;
        let eval = evaluate_tree(&tree, &sub.test)?;
        out.push((alpha, 0.5 * (eval.cls.precision + eval.cls.recall)));
    }
    Ok(out)
}

/// Train and evaluate the detector over `retrain_seeds` reseeded splits,
/// including the per-seed feature reduction. The pruning strength comes
/// from the config or, when unset, from a sweep on a seed-0 train
/// re-split.
pub fn run_pipeline(campaign: &Campaign, cfg: &CampaignConfig) -> Result<PipelineResult> {
    cfg.validate()?;
    let split_seeds = split_seeds(cfg);

    let (alpha, sweep) = match cfg.ccp_alpha {
        Some(a) => (a, None),
        None => {
            let sweep = sweep_alpha(campaign, cfg, split_seeds[0])?;
            let mut best = sweep[0];
            for &(a, score) in &sweep[1..] {
                if score > best.1 {
                    best = (a, score);
                }
            }
            (best.0, Some(sweep))
        }
    };

    let mut seeds = Vec::with_capacity(cfg.retrain_seeds);
    let mut full_rows = Vec::new();
    let mut red_rows = Vec::new();
    for (idx, &split_seed) in split_seeds.iter().enumerate() {
        let data = build_seed_data(campaign, cfg, split_seed)?;
        let params = TreeParams {
            ccp_alpha: alpha,
            allowed_features: None,
            seed: split_seed,
        };
        let reduction = reduce_features(
            &data.train,
            &data.test,
            campaign.layout,
            &params,
            None,
            cfg.retention,
            None,
        )?;
        let eval = evaluate_tree(&reduction.full_tree, &data.test)?;
        let full_used = reduction.full_tree.used_features();
        let full_layers: std::collections::BTreeSet<usize> =
            full_used.iter().map(|&f| campaign.layout.decode(f).0).collect();
        let full_row = MetricsRow::from_eval(&eval, full_used.len(), full_layers.len());
        let red_eval = evaluate_tree(&reduction.model.tree, &data.test)?;
        let reduced_row =
            MetricsRow::from_eval(&red_eval, reduction.model.n_ft, reduction.model.n_l);
        full_rows.push(full_row);
        red_rows.push(reduced_row);
        seeds.push(SeedOutcome {
            seed_index: idx,
            split_seed,
            eval,
            reduction,
            full_row,
            reduced_row,
            n_train: data.train.len(),
            n_test: data.test.len(),
        });
    }
    let (full_mean, full_std) = mean_std(&full_rows);
    let (reduced_mean, reduced_std) = mean_std(&red_rows);
    Ok(PipelineResult {
        alpha,
        sweep,
        seeds,
        full_mean,
        full_std,
        reduced_mean,
        reduced_std,
    })
}

/// Run the minimal-set search on the seed-0 split with the given pruning
/// strength.
pub fn run_minimal_search(
    campaign: &Campaign,
    cfg: &CampaignConfig,
    alpha: f64,
) -> Result<MinimalPool> {
    let split_seed = derive_seed(cfg.seed, &[STREAM_SPLIT, 0]);
    let data = build_seed_data(campaign, cfg, split_seed)?;
    crate::reduction::minimal_feature_search(
        &data.train,
        &data.test,
        campaign.layout,
        &TreeParams {
            ccp_alpha: alpha,
            allowed_features: None,
            seed: split_seed,
        },
        cfg.search_depth,
        cfg.depth_mode()?,
        cfg.retention,
    )
}
