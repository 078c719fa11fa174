//! Network description, shape validation, and the hooked forward pass.

pub mod io;
pub mod ops;
pub mod train;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// One layer of a sequential network.
#[derive(Clone, Debug)]
pub enum LayerSpec {
    Conv2d {
        /// (out_ch, in_ch, kh, kw)
        weight: Tensor4,
        bias: Vec<f32>,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Linear {
        /// Row-major (out_features x in_features).
        weight: Vec<f32>,
        bias: Vec<f32>,
        in_features: usize,
        out_features: usize,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2d { .. } => "maxpool",
            LayerSpec::Linear { .. } => "linear",
        }
    }
}

/// Read-only observer of convolution outputs, called once per conv layer
/// per forward pass, in layer order. `layer` is 1-based over conv layers.
pub trait ConvTap {
    fn on_conv(&mut self, layer: usize, output: &Tensor4);
}

/// In-place corruptor of a convolution output, applied before any tap sees
/// the buffer and before downstream layers consume it.
pub trait ConvMutator {
    fn mutate(&self, layer: usize, output: &mut Tensor4);
}

/// Sequential CNN: conv/relu/maxpool stages followed by a final linear
/// classifier over the flattened feature maps.
#[derive(Clone, Debug)]
pub struct Network {
    pub layers: Vec<LayerSpec>,
    /// (channels, height, width) of a single input sample.
    pub input_shape: (usize, usize, usize),
    pub classes: usize,
}

impl Network {
    pub fn new(layers: Vec<LayerSpec>, input_shape: (usize, usize, usize)) -> Result<Self> {
        let classes = match layers.last() {
            Some(LayerSpec::Linear { out_features, .. }) => *out_features,
            _ => return Err(Error::config("network must end with a linear layer")),
        };
        let net = Network {
            layers,
            input_shape,
            classes,
        };
        net.validate()?;
        Ok(net)
    }

    /// Walk the layer stack symbolically and verify every shape hand-off.
    pub fn validate(&self) -> Result<()> {
        let mut shape = self.input_shape;
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match layer {
                LayerSpec::Conv2d {
                    weight,
                    bias,
                    stride,
                    padding,
                } => {
                    let (oc, ic, kh, kw) = weight.shape();
                    if ic != shape.0 {
                        return Err(Error::config(format!(
                            "layer {}: conv expects {} channels, gets {}",
                            i, ic, shape.0
                        )));
                    }
                    if bias.len() != oc {
                        return Err(Error::config(format!("layer {}: bias/channel mismatch", i)));
                    }
                    (
                        oc,
                        ops::conv_out_dim(shape.1, kh, *stride, *padding)?,
                        ops::conv_out_dim(shape.2, kw, *stride, *padding)?,
                    )
                }
                LayerSpec::Relu => shape,
                LayerSpec::MaxPool2d { window, stride } => (
                    shape.0,
                    ops::pool_out_dim(shape.1, *window, *stride)?,
                    ops::pool_out_dim(shape.2, *window, *stride)?,
                ),
                LayerSpec::Linear {
                    in_features,
                    out_features,
                    ..
                } => {
                    let have = shape.0 * shape.1 * shape.2;
                    if *in_features != have {
                        return Err(Error::config(format!(
                            "layer {}: linear expects {} features, gets {}",
                            i, in_features, have
                        )));
                    }
                    if i + 1 != self.layers.len() {
                        return Err(Error::config("linear layer must be last"));
                    }
                    (*out_features, 1, 1)
                }
            };
        }
        match self.layers.last() {
            Some(LayerSpec::Linear { .. }) => Ok(()),
            _ => Err(Error::config("network must end with a linear layer")),
        }
    }

    /// Number of convolution layers (the monitored set).
    pub fn conv_layers(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv2d { .. }))
            .count()
    }

    /// Per conv layer (1-based): weight shape and output shape (c, h, w)
    /// for single-sample inputs of `input_shape`.
    pub fn conv_sites(&self) -> Result<Vec<ConvSite>> {
        let mut shape = self.input_shape;
        let mut sites = Vec::new();
        let mut l = 0;
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv2d {
                    weight,
                    stride,
                    padding,
                    ..
                } => {
                    let (oc, _, kh, kw) = weight.shape();
                    let oh = ops::conv_out_dim(shape.1, kh, *stride, *padding)?;
                    let ow = ops::conv_out_dim(shape.2, kw, *stride, *padding)?;
                    l += 1;
                    sites.push(ConvSite {
                        layer: l,
                        weight_shape: weight.shape(),
                        output_shape: (oc, oh, ow),
                    });
                    shape = (oc, oh, ow);
                }
                LayerSpec::Relu => {}
                LayerSpec::MaxPool2d { window, stride } => {
                    shape = (
                        shape.0,
                        ops::pool_out_dim(shape.1, *window, *stride)?,
                        ops::pool_out_dim(shape.2, *window, *stride)?,
                    );
                }
                LayerSpec::Linear { .. } => {}
            }
        }
        Ok(sites)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv2d { weight, bias, .. } => weight.len() + bias.len(),
                LayerSpec::Linear { weight, bias, .. } => weight.len() + bias.len(),
                _ => 0,
            })
            .sum()
    }

    /// FNV-1a over all parameter bytes; used to prove weight patches were
    /// reverted during fault campaigns.
    pub fn weights_hash(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f32| {
            for b in v.to_le_bytes() {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv2d { weight, bias, .. } => {
                    weight.data().iter().for_each(|&v| eat(v));
                    bias.iter().for_each(|&v| eat(v));
                }
                LayerSpec::Linear { weight, bias, .. } => {
                    weight.iter().for_each(|&v| eat(v));
                    bias.iter().for_each(|&v| eat(v));
                }
                _ => {}
            }
        }
        hash
    }

    /// Plain forward pass.
    pub fn forward(&self, input: &Tensor4) -> Result<Tensor4> {
        self.forward_with(input, None, &mut [])
    }

    /// Forward pass with an optional conv-output corruptor and any number
    /// of read-only taps. Taps receive each conv output after corruption,
    /// so monitors and downstream layers observe the same buffer. With no
    /// mutator, logits are bit-identical to an untapped run.
    pub fn forward_with(
        &self,
        input: &Tensor4,
        mutator: Option<&dyn ConvMutator>,
        taps: &mut [&mut dyn ConvTap],
    ) -> Result<Tensor4> {
        let (_, c, h, w) = input.shape();
        if (c, h, w) != self.input_shape {
            return Err(Error::config(format!(
                "input shape ({},{},{}) does not match network input {:?}",
                c, h, w, self.input_shape
            )));
        }
        let mut x = input.clone();
        let mut conv_index = 0;
        for layer in &self.layers {
            x = match layer {
                LayerSpec::Conv2d {
                    weight,
                    bias,
                    stride,
                    padding,
                } => {
                    let mut out = ops::conv2d(&x, weight, bias, *stride, *padding)?;
                    conv_index += 1;
                    if let Some(m) = mutator {
                        m.mutate(conv_index, &mut out);
                    }
                    for tap in taps.iter_mut() {
                        tap.on_conv(conv_index, &out);
                    }
                    out
                }
                LayerSpec::Relu => ops::relu(&x),
                LayerSpec::MaxPool2d { window, stride } => ops::maxpool2d(&x, *window, *stride)?,
                LayerSpec::Linear {
                    weight,
                    bias,
                    out_features,
                    ..
                } => ops::linear(&x, weight, bias, *out_features)?,
            };
        }
        Ok(x)
    }

    /// Logits row for one sample of a forward result.
    pub fn logits_row<'a>(&self, logits: &'a Tensor4, sample: usize) -> &'a [f32] {
        logits.sample(sample)
    }
}

/// Location and extent of one conv layer, for fault sampling and monitors.
#[derive(Clone, Copy, Debug)]
pub struct ConvSite {
    /// 1-based conv layer index.
    pub layer: usize,
    pub weight_shape: (usize, usize, usize, usize),
    /// Single-sample output shape (c, h, w).
    pub output_shape: (usize, usize, usize),
}

/// Index of the largest logit; ties go to the lowest index. A NaN logit is
/// reported as a DUE condition instead of a class.
pub fn top1(logits: &[f32]) -> Result<usize> {
    if logits.is_empty() {
        return Err(Error::config("empty logits"));
    }
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v.is_nan() {
            return Err(Error::Due(format!("NaN logit at index {}", i)));
        }
        if v > logits[best] {
            best = i;
        }
    }
    Ok(best)
}
