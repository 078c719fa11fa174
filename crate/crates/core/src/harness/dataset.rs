//! Synthetic 10-class grayscale shape dataset and IDX-format storage.
//!
//! The generator rasterizes simple geometric shapes (28x28, one channel)
//! with jittered position, size, and intensity plus light background
//! noise. Pixels are quantized to the 8-bit grid so files written in IDX
//! format round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const IMAGE_SIDE: usize = 28;
pub const N_CLASSES: usize = 10;

pub const CLASS_NAMES: [&str; N_CLASSES] = [
    "circle",
    "dotcircle",
    "square",
    "dotsquare",
    "triangle",
    "plus",
    "cross",
    "hstripes",
    "vstripes",
    "diamond",
];

/// Topology of the built-in four-conv classifier sized for this dataset
/// (about 66k parameters, four monitored conv layers).
pub const CLASSIFIER_TOPOLOGY: &str = "\
input 1 28 28
conv 16 3x3 stride 1 pad 1
relu
maxpool 2 stride 2
conv 32 3x3 stride 1 pad 1
relu
maxpool 2 stride 2
conv 64 3x3 stride 1 pad 1
relu
conv 64 3x3 stride 1 pad 1
relu
maxpool 2 stride 2
linear 10
";

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Images (n, 1, 28, 28) in [0, 1] with one class label per image.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Tensor4,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn quantize(v: f32) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Generate `n` images; classes cycle round-robin so every prefix is close
/// to balanced. All ten classes are drawn as thin strokes (outlines, bars,
/// or stripes) with jittered position, size, rotation, anisotropic
/// stretch, stroke width, and pixel noise, so a small classifier lands in
/// the high-nineties instead of memorizing rigid templates. Intensities
/// stay in a narrow band, keeping fault-free activation statistics
/// comparable across images.
pub fn generate(n: usize, seed: u64) -> Dataset {
    let side = IMAGE_SIDE;
    let mut images = Tensor4::zeros(n, 1, side, side);
    let mut labels = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let class = (i % N_CLASSES) as u8;
        labels.push(class);

        let cx = side as f64 / 2.0 - 0.5 + rng.random_range(-3.0..3.0);
        let cy = side as f64 / 2.0 - 0.5 + rng.random_range(-3.0..3.0);
        let r = rng.random_range(6.5..8.5);
        let bg = rng.random_range(0.0..0.06) as f32;
        let fg = rng.random_range(0.85..1.0) as f32;
        let theta = rng.random_range(-0.26..0.26f64);
        let (sin, cos) = theta.sin_cos();
        let sx = rng.random_range(0.8..1.25);
        let sy = rng.random_range(0.8..1.25);
        let line = rng.random_range(1.0..1.5);
        let dot = r * 0.22;
        let period = rng.random_range(3.4..4.6);
        let width = period * rng.random_range(0.28..0.38);
        let phase = rng.random_range(0.0..period);

        for y in 0..side {
            for x in 0..side {
                let dx0 = x as f64 - cx;
                let dy0 = y as f64 - cy;
                let dx = (dx0 * cos + dy0 * sin) / sx;
                let dy = (-dx0 * sin + dy0 * cos) / sy;
                let d = (dx * dx + dy * dy).sqrt();
                let m = dx.abs().max(dy.abs());
                let ring = d <= r && d >= r - line;
                let box_edge = m <= r * 0.8 && m >= r * 0.8 - line;
                let inside = match class {
                    0 => ring,
                    1 => ring || d <= dot,
                    2 => box_edge,
                    3 => box_edge || d <= dot,
                    4 => {
                        let e_base = r - dy;
                        let e_side = ((dy + r) * 0.5 - dx.abs()) * 0.894;
                        dy >= -r
                            && e_base >= 0.0
                            && e_side >= 0.0
                            && e_base.min(e_side) <= line * 1.1
                    }
                    5 => {
                        (dx.abs() <= line && dy.abs() <= r) || (dy.abs() <= line && dx.abs() <= r)
                    }
                    6 => (dx.abs() - dy.abs()).abs() <= line && m <= r,
                    7 => (dy + phase).rem_euclid(period) < width,
                    8 => (dx + phase).rem_euclid(period) < width,
                    _ => {
                        let s = dx.abs() + dy.abs();
                        s <= r && s >= r - 1.4 * line
                    }
                };
                let noise = rng.random_range(-0.04..0.04) as f32;
                let base = if inside { fg } else { bg };
                images.set(i, 0, y, x, quantize(base + noise));
            }
        }
    }
    Dataset { images, labels }
}

fn put_u32_be(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_be_bytes())?;
    Ok(())
}

fn get_u32_be(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Truncated(format!("IDX {}", what)))?;
    Ok(u32::from_be_bytes(buf))
}

/// Write single-channel images as an IDX3 file (big-endian magic 0x803).
pub fn write_idx_images(path: &Path, images: &Tensor4) -> Result<()> {
    let (n, c, h, w) = images.shape();
    if c != 1 {
        return Err(Error::config("IDX image files hold one channel"));
    }
    let mut out = BufWriter::new(File::create(path)?);
    put_u32_be(&mut out, IDX_IMAGES_MAGIC)?;
    put_u32_be(&mut out, n as u32)?;
    put_u32_be(&mut out, h as u32)?;
    put_u32_be(&mut out, w as u32)?;
    let bytes: Vec<u8> = images
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Read an IDX3 image file into a (n, 1, h, w) tensor scaled to [0, 1].
pub fn read_idx_images(path: &Path) -> Result<Tensor4> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = get_u32_be(&mut r, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic(magic.to_be_bytes()));
    }
    let n = get_u32_be(&mut r, "count")? as usize;
    let h = get_u32_be(&mut r, "height")? as usize;
    let w = get_u32_be(&mut r, "width")? as usize;
    let mut bytes = vec![0u8; n * h * w];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Truncated("IDX pixel data".into()))?;
    let data: Vec<f32> = bytes.iter().map(|&b| b as f32 / 255.0).collect();
    Tensor4::new(n, 1, h, w, data)
}

/// Write labels as an IDX1 file (big-endian magic 0x801).
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    put_u32_be(&mut out, IDX_LABELS_MAGIC)?;
    put_u32_be(&mut out, labels.len() as u32)?;
    out.write_all(labels)?;
    out.flush()?;
    Ok(())
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = get_u32_be(&mut r, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic(magic.to_be_bytes()));
    }
    let n = get_u32_be(&mut r, "count")? as usize;
    let mut labels = vec![0u8; n];
    r.read_exact(&mut labels)
        .map_err(|_| Error::Truncated("IDX label data".into()))?;
    Ok(labels)
}

/// Read a matching image/label pair, checking the counts agree.
pub fn read_pair(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if images.n() != labels.len() {
        return Err(Error::config(format!(
            "{} images but {} labels",
            images.n(),
            labels.len()
        )));
    }
    Ok(Dataset { images, labels })
}
