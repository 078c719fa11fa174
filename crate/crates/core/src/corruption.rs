//! Fault universe: input-level corruptions (noise, blur, contrast) and
//! memory-level single-bit flips in conv weights or conv output buffers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::net::{ConvMutator, ConvSite, LayerSpec, Network};
use crate::tensor::Tensor4;

/// Ground-truth class of an injected fault. `None` marks fault-free runs
/// and masked injections in detector labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultClass {
    None,
    Noise,
    Blur,
    Contrast,
    Memory,
}

impl FaultClass {
    pub const COUNT: usize = 5;
    pub const ALL: [FaultClass; 5] = [
        FaultClass::None,
        FaultClass::Noise,
        FaultClass::Blur,
        FaultClass::Contrast,
        FaultClass::Memory,
    ];

    pub fn index(self) -> usize {
        match self {
            FaultClass::None => 0,
            FaultClass::Noise => 1,
            FaultClass::Blur => 2,
            FaultClass::Contrast => 3,
            FaultClass::Memory => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<FaultClass> {
        FaultClass::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaultClass::None => "none",
            FaultClass::Noise => "noise",
            FaultClass::Blur => "blur",
            FaultClass::Contrast => "contrast",
            FaultClass::Memory => "memory",
        }
    }

    pub fn from_str(s: &str) -> Result<FaultClass> {
        FaultClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::parse(format!("unknown fault class '{}'", s)))
    }

    pub fn category(self) -> FaultCategory {
        match self {
            FaultClass::None => FaultCategory::Clean,
            FaultClass::Noise | FaultClass::Blur | FaultClass::Contrast => FaultCategory::Input,
            FaultClass::Memory => FaultCategory::Memory,
        }
    }
}

/// Coarse grouping used by the category evaluation mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultCategory {
    Clean,
    Input,
    Memory,
}

impl FaultCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultCategory::Clean => "clean",
            FaultCategory::Input => "input",
            FaultCategory::Memory => "memory",
        }
    }
}

/// Magnitude step of an input corruption; the concrete values live in the
/// campaign config (defaults: noise {0.1, 1, 10}, blur sigma {0.3, 1, 3},
/// contrast factor {0.8, 0.4, 0.1}).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Magnitude {
    Low,
    Med,
    High,
}

impl Magnitude {
    pub const ALL: [Magnitude; 3] = [Magnitude::Low, Magnitude::Med, Magnitude::High];

    pub fn index(self) -> usize {
        match self {
            Magnitude::Low => 0,
            Magnitude::Med => 1,
            Magnitude::High => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Magnitude> {
        Magnitude::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Magnitude::Low => "low",
            Magnitude::Med => "med",
            Magnitude::High => "high",
        }
    }

    pub fn from_str(s: &str) -> Result<Magnitude> {
        match s {
            "low" => Ok(Magnitude::Low),
            "med" => Ok(Magnitude::Med),
            "high" => Ok(Magnitude::High),
            other => Err(Error::parse(format!("unknown magnitude '{}'", other))),
        }
    }
}

/// Batch of images with values validated to lie in [0, 1].
#[derive(Clone, Debug)]
pub struct ImageBatch(Tensor4);

impl ImageBatch {
    pub fn new(t: Tensor4) -> Result<Self> {
        if !t.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            return Err(Error::config("image values must be finite and in [0,1]"));
        }
        Ok(ImageBatch(t))
    }

    pub fn tensor(&self) -> &Tensor4 {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor4 {
        self.0
    }
}

/// Additive Gaussian pixel noise, std = `sigma * pixel_scale`, clipped back
/// to [0, 1]. `pixel_scale` defaults to 1/255 in the campaign config, so
/// magnitudes are expressed in 8-bit pixel steps.
pub fn apply_gaussian_noise(
    image: &ImageBatch,
    sigma: f64,
    pixel_scale: f64,
    seed: u64,
) -> Result<ImageBatch> {
    if sigma < 0.0 || pixel_scale <= 0.0 {
        return Err(Error::config("noise sigma must be >= 0 and pixel scale > 0"));
    }
    let mut out = image.0.clone();
    if sigma > 0.0 {
        let normal = Normal::new(0.0f64, sigma * pixel_scale)
            .map_err(|e| Error::config(format!("bad noise distribution: {}", e)))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in out.data_mut() {
            *v = (*v + normal.sample(&mut rng) as f32).clamp(0.0, 1.0);
        }
    }
    Ok(ImageBatch(out))
}

/// Height and width of the blur kernel.
pub const BLUR_KERNEL: (usize, usize) = (5, 9);

/// Normalized 1D Gaussian sampled at integer offsets around the center tap.
pub fn gaussian_kernel_1d(len: usize, sigma: f64) -> Result<Vec<f32>> {
    if sigma <= 0.0 {
        return Err(Error::config("blur sigma must be positive"));
    }
    if len == 0 || len % 2 == 0 {
        return Err(Error::config("kernel length must be odd"));
    }
    let c = (len / 2) as f64;
    let raw: Vec<f64> = (0..len)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.iter().map(|v| (v / sum) as f32).collect())
}

#[inline]
fn reflect(i: isize, n: isize) -> usize {
    // Mirror without repeating the edge sample: -1 -> 1, n -> n-2.
    let i = if i < 0 { -i } else if i >= n { 2 * n - 2 - i } else { i };
    i as usize
}

/// Separable Gaussian blur with a fixed 5x9 (h x w) kernel and reflect
/// padding. The image must be at least kernel-sized.
pub fn apply_gaussian_blur(image: &ImageBatch, sigma: f64) -> Result<ImageBatch> {
    let (n, c, h, w) = image.0.shape();
    let (kh, kw) = BLUR_KERNEL;
    if h < kh || w < kw {
        return Err(Error::config(format!(
            "image {}x{} smaller than blur kernel {}x{}",
            h, w, kh, kw
        )));
    }
    let kv = gaussian_kernel_1d(kh, sigma)?;
    let kx = gaussian_kernel_1d(kw, sigma)?;
    let rv = (kh / 2) as isize;
    let rx = (kw / 2) as isize;

    let mut out = image.0.clone();
    let mut tmp = vec![0.0f32; h * w];
    for b in 0..n {
        for ch in 0..c {
            let src = image.0.map(b, ch);
            // Horizontal pass.
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0f32;
                    for (j, &k) in kx.iter().enumerate() {
                        let sx = reflect(x as isize + j as isize - rx, w as isize);
                        acc += k * src[y * w + sx];
                    }
                    tmp[y * w + x] = acc;
                }
            }
            // Vertical pass.
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0f32;
                    for (j, &k) in kv.iter().enumerate() {
                        let sy = reflect(y as isize + j as isize - rv, h as isize);
                        acc += k * tmp[sy * w + x];
                    }
                    out.set(b, ch, y, x, acc.clamp(0.0, 1.0));
                }
            }
        }
    }
    Ok(ImageBatch(out))
}

/// Pull pixels toward the per-image mean: out = m + factor * (in - m).
///
/// `m` is the mean of the luminance-weighted grayscale image (BT.601
/// weights for 3-channel input, plain mean otherwise). factor 1 is the
/// identity, factor 0 a uniform gray image.
pub fn apply_contrast(image: &ImageBatch, factor: f64) -> Result<ImageBatch> {
    if !(0.0..=1.0).contains(&factor) {
        return Err(Error::config("contrast factor must lie in [0,1]"));
    }
    let (n, c, h, w) = image.0.shape();
    let mut out = image.0.clone();
    for b in 0..n {
        let m = if c == 3 {
            let (r, g, bch) = (image.0.map(b, 0), image.0.map(b, 1), image.0.map(b, 2));
            let mut sum = 0.0f64;
            for i in 0..h * w {
                sum += 0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * bch[i] as f64;
            }
            sum / (h * w) as f64
        } else {
            let mut sum = 0.0f64;
            for ch in 0..c {
                for &v in image.0.map(b, ch) {
                    sum += v as f64;
                }
            }
            sum / (c * h * w) as f64
        };
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = image.0.get(b, ch, y, x) as f64;
                    out.set(b, ch, y, x, ((m + factor * (v - m)) as f32).clamp(0.0, 1.0));
                }
            }
        }
    }
    Ok(ImageBatch(out))
}

/// XOR one bit of the binary32 representation. Applying it twice restores
/// the original value exactly.
#[inline]
pub fn flip_bit(v: f32, bit: u8) -> f32 {
    assert!(bit < 32, "bit index {} out of range", bit);
    f32::from_bits(v.to_bits() ^ (1u32 << bit))
}

/// Which kind of memory the fault lands in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemoryFlavor {
    Weight,
    Neuron,
}

impl MemoryFlavor {
    pub fn as_str(self) -> &'static str {
        match self {
            MemoryFlavor::Weight => "weight",
            MemoryFlavor::Neuron => "neuron",
        }
    }

    pub fn from_str(s: &str) -> Result<MemoryFlavor> {
        match s {
            "weight" => Ok(MemoryFlavor::Weight),
            "neuron" => Ok(MemoryFlavor::Neuron),
            other => Err(Error::parse(format!("unknown memory flavor '{}'", other))),
        }
    }
}

/// Exact location of a memory fault.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryFaultSpec {
    pub flavor: MemoryFlavor,
    /// 1-based conv layer index.
    pub layer: usize,
    /// Weight faults: (out_ch, in_ch, kh, kw). Neuron faults: (c, h, w, 0).
    pub coord: [usize; 4],
    pub bit: u8,
    pub accelerated: bool,
}

/// Fully sampled fault, ready to apply to one inference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultSpec {
    pub class: FaultClass,
    pub magnitude: Option<Magnitude>,
    pub memory: Option<MemoryFaultSpec>,
    /// Seed for any stochastic part of the application (noise draw).
    pub seed: u64,
}

impl FaultSpec {
    pub fn fault_free(seed: u64) -> FaultSpec {
        FaultSpec {
            class: FaultClass::None,
            magnitude: None,
            memory: None,
            seed,
        }
    }
}

/// Reversible single-bit patch on a conv weight. Applying twice restores
/// the pristine network.
#[derive(Clone, Copy, Debug)]
pub struct WeightFault {
    pub layer: usize,
    pub coord: [usize; 4],
    pub bit: u8,
}

impl WeightFault {
    /// Toggle the bit in place; returns the value now stored.
    pub fn apply(&self, net: &mut Network) -> Result<f32> {
        let mut conv_index = 0;
        for layer in net.layers.iter_mut() {
            if let LayerSpec::Conv2d { weight, .. } = layer {
                conv_index += 1;
                if conv_index == self.layer {
                    let [o, i, ky, kx] = self.coord;
                    let (oc, ic, kh, kw) = weight.shape();
                    if o >= oc || i >= ic || ky >= kh || kx >= kw {
                        return Err(Error::config(format!(
                            "weight coord {:?} out of bounds for layer {}",
                            self.coord, self.layer
                        )));
                    }
                    let v = flip_bit(weight.get(o, i, ky, kx), self.bit);
                    weight.set(o, i, ky, kx, v);
                    return Ok(v);
                }
            }
        }
        Err(Error::config(format!("no conv layer {}", self.layer)))
    }
}

/// Transient single-bit corruption of one conv output element, applied
/// during the forward pass (sample 0 of the running batch).
#[derive(Clone, Copy, Debug)]
pub struct NeuronFault {
    pub layer: usize,
    /// (c, h, w) within the conv output.
    pub coord: [usize; 3],
    pub bit: u8,
}

impl ConvMutator for NeuronFault {
    fn mutate(&self, layer: usize, output: &mut Tensor4) {
        if layer != self.layer {
            return;
        }
        let [c, h, w] = self.coord;
        let (_, oc, oh, ow) = output.shape();
        assert!(
            c < oc && h < oh && w < ow,
            "neuron coord {:?} out of bounds for conv output {:?}",
            self.coord,
            output.shape()
        );
        let v = flip_bit(output.get(0, c, h, w), self.bit);
        output.set(0, c, h, w, v);
    }
}

/// Bits targeted by accelerated memory campaigns: the three highest
/// exponent bits of binary32.
pub const ACCELERATED_BITS: [u8; 3] = [28, 29, 30];

/// Draw one fault uniformly: class from `classes`, then magnitude (input
/// classes) or flavor/layer/coordinate/bit (memory). With `accelerated`,
/// the class is forced to memory and the bit drawn from `ACCELERATED_BITS`.
pub fn sample_fault_spec(
    classes: &[FaultClass],
    sites: &[ConvSite],
    accelerated: bool,
    rng: &mut ChaCha8Rng,
) -> Result<FaultSpec> {
    if classes.is_empty() {
        return Err(Error::config("no fault classes enabled"));
    }
    let class = if accelerated {
        FaultClass::Memory
    } else {
        classes[rng.random_range(0..classes.len())]
    };
    let mut spec = FaultSpec {
        class,
        magnitude: None,
        memory: None,
        seed: rng.random::<u64>(),
    };
    match class {
        FaultClass::None => {}
        FaultClass::Noise | FaultClass::Blur | FaultClass::Contrast => {
            spec.magnitude = Magnitude::from_index(rng.random_range(0..3));
        }
        FaultClass::Memory => {
            if sites.is_empty() {
                return Err(Error::config("memory faults need at least one conv layer"));
            }
            let site = sites[rng.random_range(0..sites.len())];
            let flavor = if rng.random_range(0..2) == 0 {
                MemoryFlavor::Weight
            } else {
                MemoryFlavor::Neuron
            };
            let coord = match flavor {
                MemoryFlavor::Weight => {
                    let (oc, ic, kh, kw) = site.weight_shape;
                    [
                        rng.random_range(0..oc),
                        rng.random_range(0..ic),
                        rng.random_range(0..kh),
                        rng.random_range(0..kw),
                    ]
                }
                MemoryFlavor::Neuron => {
                    let (c, h, w) = site.output_shape;
                    [
                        rng.random_range(0..c),
                        rng.random_range(0..h),
                        rng.random_range(0..w),
                        0,
                    ]
                }
            };
            let bit = if accelerated {
                ACCELERATED_BITS[rng.random_range(0..ACCELERATED_BITS.len())]
            } else {
                rng.random_range(0..32) as u8
            };
            spec.memory = Some(MemoryFaultSpec {
                flavor,
                layer: site.layer,
                coord,
                bit,
                accelerated,
            });
        }
    }
    Ok(spec)
}
