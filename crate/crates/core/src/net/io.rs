//! Network persistence: the QSNT binary weights format and a one-layer-per-
//! line text topology format for building fresh (randomly initialized) nets.
//!
//! QSNT is little-endian throughout: magic `QSNT`, format version, input
//! shape, class count, then one record per layer (kind tag, shape header,
//! raw binary32 payload).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::net::{LayerSpec, Network};
use crate::tensor::Tensor4;

pub const MAGIC: [u8; 4] = *b"QSNT";
pub const FORMAT_VERSION: u32 = 1;

const KIND_CONV: u8 = 0;
const KIND_RELU: u8 = 1;
const KIND_MAXPOOL: u8 = 2;
const KIND_LINEAR: u8 = 3;

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_network(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let mut r = BufReader::new(File::open(path)?);
    read_network(&mut r)
}

pub fn write_network(net: &Network, w: &mut impl Write) -> Result<()> {
    w.write_all(&MAGIC)?;
    put_u32(w, FORMAT_VERSION)?;
    put_u32(w, net.input_shape.0 as u32)?;
    put_u32(w, net.input_shape.1 as u32)?;
    put_u32(w, net.input_shape.2 as u32)?;
    put_u32(w, net.classes as u32)?;
    put_u32(w, net.layers.len() as u32)?;
    for layer in &net.layers {
        match layer {
            LayerSpec::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => {
                w.write_all(&[KIND_CONV])?;
                let (oc, ic, kh, kw) = weight.shape();
                for d in [oc, ic, kh, kw, *stride, *padding] {
                    put_u32(w, d as u32)?;
                }
                put_f32s(w, weight.data())?;
                put_f32s(w, bias)?;
            }
            LayerSpec::Relu => w.write_all(&[KIND_RELU])?,
            LayerSpec::MaxPool2d { window, stride } => {
                w.write_all(&[KIND_MAXPOOL])?;
                put_u32(w, *window as u32)?;
                put_u32(w, *stride as u32)?;
            }
            LayerSpec::Linear {
                weight,
                bias,
                in_features,
                out_features,
            } => {
                w.write_all(&[KIND_LINEAR])?;
                put_u32(w, *out_features as u32)?;
                put_u32(w, *in_features as u32)?;
                put_f32s(w, weight)?;
                put_f32s(w, bias)?;
            }
        }
    }
    Ok(())
}

pub fn read_network(r: &mut impl Read) -> Result<Network> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Truncated("missing magic".into()))?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = get_u32(r, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let c = get_u32(r, "input channels")? as usize;
    let h = get_u32(r, "input height")? as usize;
    let w_dim = get_u32(r, "input width")? as usize;
    let classes = get_u32(r, "class count")? as usize;
    let n_layers = get_u32(r, "layer count")? as usize;

    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)
            .map_err(|_| Error::Truncated(format!("missing kind tag for layer {}", i)))?;
        let layer = match kind[0] {
            KIND_CONV => {
                let oc = get_u32(r, "conv out channels")? as usize;
                let ic = get_u32(r, "conv in channels")? as usize;
                let kh = get_u32(r, "conv kernel h")? as usize;
                let kw = get_u32(r, "conv kernel w")? as usize;
                let stride = get_u32(r, "conv stride")? as usize;
                let padding = get_u32(r, "conv padding")? as usize;
                let weight = get_f32s(r, oc * ic * kh * kw, "conv weights")?;
                let bias = get_f32s(r, oc, "conv bias")?;
                LayerSpec::Conv2d {
                    weight: Tensor4::new(oc, ic, kh, kw, weight)?,
                    bias,
                    stride,
                    padding,
                }
            }
            KIND_RELU => LayerSpec::Relu,
            KIND_MAXPOOL => LayerSpec::MaxPool2d {
                window: get_u32(r, "pool window")? as usize,
                stride: get_u32(r, "pool stride")? as usize,
            },
            KIND_LINEAR => {
                let out_features = get_u32(r, "linear out features")? as usize;
                let in_features = get_u32(r, "linear in features")? as usize;
                let weight = get_f32s(r, out_features * in_features, "linear weights")?;
                let bias = get_f32s(r, out_features, "linear bias")?;
                LayerSpec::Linear {
                    weight,
                    bias,
                    in_features,
                    out_features,
                }
            }
            other => return Err(Error::parse(format!("unknown layer kind tag {}", other))),
        };
        layers.push(layer);
    }
    let net = Network::new(layers, (c, h, w_dim))?;
    if net.classes != classes {
        return Err(Error::parse(format!(
            "declared {} classes but final layer emits {}",
            classes, net.classes
        )));
    }
    Ok(net)
}

/// Build a randomly initialized network from a text topology.
///
/// One layer per line; `#` starts a comment. Example:
///
/// ```text
/// input 1 28 28
/// conv 16 3x3 stride 1 pad 1
/// relu
/// maxpool 2 stride 2
/// linear 10
/// ```
///
/// Conv and linear weights get He-normal initialization from the given seed.
pub fn network_from_topology(text: &str, seed: u64) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input: Option<(usize, usize, usize)> = None;
    let mut shape = (0usize, 0usize, 0usize);
    let mut layers = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let at = |i: usize| -> Result<&str> {
            toks.get(i)
                .copied()
                .ok_or_else(|| Error::parse(format!("line {}: missing token", lineno + 1)))
        };
        let num = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::parse(format!("line {}: bad number '{}'", lineno + 1, s)))
        };
        match toks[0] {
            "input" => {
                if input.is_some() {
                    return Err(Error::parse(format!("line {}: duplicate input", lineno + 1)));
                }
                shape = (num(at(1)?)?, num(at(2)?)?, num(at(3)?)?);
                input = Some(shape);
            }
            "conv" => {
                if input.is_none() {
                    return Err(Error::parse("conv before input line"));
                }
                let oc = num(at(1)?)?;
                let kspec = at(2)?;
                let (kh, kw) = match kspec.split_once('x') {
                    Some((a, b)) => (num(a)?, num(b)?),
                    None => {
                        let k = num(kspec)?;
                        (k, k)
                    }
                };
                let mut stride = 1;
                let mut padding = 0;
                let mut i = 3;
                while i + 1 < toks.len() + 1 && i < toks.len() {
                    match toks[i] {
                        "stride" => {
                            stride = num(at(i + 1)?)?;
                            i += 2;
                        }
                        "pad" => {
                            padding = num(at(i + 1)?)?;
                            i += 2;
                        }
                        other => {
                            return Err(Error::parse(format!(
                                "line {}: unknown conv option '{}'",
                                lineno + 1,
                                other
                            )))
                        }
                    }
                }
                let ic = shape.0;
                let fan_in = ic * kh * kw;
                let weight = he_init(&mut rng, oc * fan_in, fan_in);
                layers.push(LayerSpec::Conv2d {
                    weight: Tensor4::new(oc, ic, kh, kw, weight)?,
                    bias: vec![0.0; oc],
                    stride,
                    padding,
                });
                shape = (
                    oc,
                    super::ops::conv_out_dim(shape.1, kh, stride, padding)?,
                    super::ops::conv_out_dim(shape.2, kw, stride, padding)?,
                );
            }
            "relu" => layers.push(LayerSpec::Relu),
            "maxpool" => {
                let window = num(at(1)?)?;
                let stride = if toks.len() > 2 {
                    if at(2)? != "stride" {
                        return Err(Error::parse(format!(
                            "line {}: expected 'stride'",
                            lineno + 1
                        )));
                    }
                    num(at(3)?)?
                } else {
                    window
                };
                layers.push(LayerSpec::MaxPool2d { window, stride });
                shape = (
                    shape.0,
                    super::ops::pool_out_dim(shape.1, window, stride)?,
                    super::ops::pool_out_dim(shape.2, window, stride)?,
                );
            }
            "linear" => {
                let out_features = num(at(1)?)?;
                let in_features = shape.0 * shape.1 * shape.2;
                let weight = he_init(&mut rng, out_features * in_features, in_features);
                layers.push(LayerSpec::Linear {
                    weight,
                    bias: vec![0.0; out_features],
                    in_features,
                    out_features,
                });
                shape = (out_features, 1, 1);
            }
            other => {
                return Err(Error::parse(format!(
                    "line {}: unknown layer '{}'",
                    lineno + 1,
                    other
                )))
            }
        }
    }
    let input = input.ok_or_else(|| Error::parse("topology has no input line"))?;
    Network::new(layers, input)
}

fn he_init(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> Vec<f32> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    (0..len).map(|_| normal.sample(rng) as f32).collect()
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f32s(w: &mut impl Write, vs: &[f32]) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Truncated(format!("missing {}", what)))?;
    Ok(u32::from_le_bytes(b))
}

fn get_f32s(r: &mut impl Read, len: usize, what: &str) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Truncated(format!("short read in {}", what)))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOPOLOGY: &str = "\
# fixture net
input 1 8 8
conv 4 3x3 stride 1 pad 1
relu
maxpool 2 stride 2
linear 3
";

    #[test]
    fn topology_builds_expected_shapes() {
        let net = network_from_topology(TOPOLOGY, 11).unwrap();
        assert_eq!(net.input_shape, (1, 8, 8));
        assert_eq!(net.classes, 3);
        assert_eq!(net.conv_layers(), 1);
        let sites = net.conv_sites().unwrap();
        assert_eq!(sites[0].output_shape, (4, 8, 8));
    }

    #[test]
    fn topology_same_seed_same_weights() {
        let a = network_from_topology(TOPOLOGY, 5).unwrap();
        let b = network_from_topology(TOPOLOGY, 5).unwrap();
        let c = network_from_topology(TOPOLOGY, 6).unwrap();
        assert_eq!(a.weights_hash(), b.weights_hash());
        assert_ne!(a.weights_hash(), c.weights_hash());
    }

    #[test]
    fn topology_rejects_garbage() {
        assert!(network_from_topology("input 1 8\n", 0).is_err());
        assert!(network_from_topology("conv 4 3x3\nlinear 2\n", 0).is_err());
        assert!(network_from_topology("input 1 8 8\nswish\nlinear 2\n", 0).is_err());
    }

    #[test]
    fn round_trip_is_bitwise_identical() {
        let net = network_from_topology(TOPOLOGY, 42).unwrap();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        let back = read_network(&mut buf.as_slice()).unwrap();
        assert_eq!(net.weights_hash(), back.weights_hash());
        assert_eq!(net.input_shape, back.input_shape);
        assert_eq!(net.classes, back.classes);
        assert_eq!(net.layers.len(), back.layers.len());
    }

    #[test]
    fn scalar_one_serializes_little_endian() {
        let mut buf = Vec::new();
        put_f32s(&mut buf, &[1.0]).unwrap();
        assert_eq!(buf, [0x00, 0x00, 0x80, 0x3F]);
    }

    #[test]
    fn reader_rejects_bad_magic() {
        let net = network_from_topology(TOPOLOGY, 1).unwrap();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        buf[0] = b'X';
        match read_network(&mut buf.as_slice()) {
            Err(Error::BadMagic(m)) => assert_eq!(&m, b"XSNT"),
            other => panic!("expected BadMagic, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn reader_rejects_future_version() {
        let net = network_from_topology(TOPOLOGY, 1).unwrap();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        buf[4..8].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(
            read_network(&mut buf.as_slice()),
            Err(Error::UnsupportedVersion(99))
        ));
    }

    #[test]
    fn reader_rejects_truncated_payload() {
        let net = network_from_topology(TOPOLOGY, 1).unwrap();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        buf.truncate(buf.len() - 5);
        assert!(matches!(
            read_network(&mut buf.as_slice()),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn save_and_load_via_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.qsnt");
        let net = network_from_topology(TOPOLOGY, 9).unwrap();
        save_network(&net, &path).unwrap();
        let back = load_network(&path).unwrap();
        assert_eq!(net.weights_hash(), back.weights_hash());
    }
}
