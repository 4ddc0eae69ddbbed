//! Layer types: declarative specs, parameter layout/init, forward kernels and
//! their hand-written backward passes.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod norm;
pub mod pool;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Shape, Tensor};
use rand_core::RngCore;

/// Spatial padding policy shared by convolution and pooling.
///
/// `Same` pads with the extra pixel on the bottom/right when the total
/// padding is odd; output extent is `ceil(input / stride)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2D {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: Padding,
    pub use_bias: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparableConv2D {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: Padding,
    pub use_bias: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool2D {
    pub pool_h: usize,
    pub pool_w: usize,
    pub stride: usize,
    pub padding: Padding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub use_bias: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub channels: usize,
    pub epsilon: f32,
    pub momentum: f32,
}

impl BatchNorm {
    /// Reference-backbone defaults: epsilon 1e-3, momentum 0.99.
    pub fn with_defaults(channels: usize) -> Self {
        BatchNorm {
            channels,
            epsilon: 1e-3,
            momentum: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dropout {
    pub rate: f64,
}

/// One layer of the network, with everything needed to derive parameter
/// shapes and output extents.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2D(Conv2D),
    SeparableConv2D(SeparableConv2D),
    BatchNorm(BatchNorm),
    ReLU,
    MaxPool2D(MaxPool2D),
    GlobalAvgPool2D,
    Dense(Dense),
    Dropout(Dropout),
    Flatten,
    ResidualAdd,
    Softmax,
}

/// One named parameter tensor of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub values: Tensor,
    pub trainable: bool,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: usize, what: &str| {
            if v == 0 {
                Err(Error::input(format!("{what} must be positive")))
            } else {
                Ok(())
            }
        };
        match self {
            LayerSpec::Conv2D(c) => {
                positive(c.in_channels, "in_channels")?;
                positive(c.out_channels, "out_channels")?;
                positive(c.kernel_h, "kernel_h")?;
                positive(c.kernel_w, "kernel_w")?;
                positive(c.stride, "stride")
            }
            LayerSpec::SeparableConv2D(c) => {
                positive(c.in_channels, "in_channels")?;
                positive(c.out_channels, "out_channels")?;
                positive(c.kernel_h, "kernel_h")?;
                positive(c.kernel_w, "kernel_w")?;
                positive(c.stride, "stride")
            }
            LayerSpec::MaxPool2D(p) => {
                positive(p.pool_h, "pool_h")?;
                positive(p.pool_w, "pool_w")?;
                positive(p.stride, "stride")
            }
            LayerSpec::Dense(d) => {
                positive(d.in_features, "in_features")?;
                positive(d.out_features, "out_features")
            }
            LayerSpec::BatchNorm(b) => positive(b.channels, "channels"),
            LayerSpec::Dropout(d) => {
                if !(0.0..=1.0).contains(&d.rate) {
                    Err(Error::input(format!(
                        "dropout rate {} outside [0, 1]",
                        d.rate
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Parameter layout: (name, shape, trainable), fully determined by the
    /// layer's configuration.
    pub fn param_layout(&self) -> Vec<(&'static str, Shape, bool)> {
        match self {
            LayerSpec::Conv2D(c) => {
                let mut v = vec![(
                    "kernel",
                    Shape::new(vec![c.kernel_h, c.kernel_w, c.in_channels, c.out_channels]),
                    true,
                )];
                if c.use_bias {
                    v.push(("bias", Shape::new(vec![c.out_channels]), true));
                }
                v
            }
            LayerSpec::SeparableConv2D(c) => {
                let mut v = vec![
                    (
                        "depthwise_kernel",
                        Shape::new(vec![c.kernel_h, c.kernel_w, c.in_channels]),
                        true,
                    ),
                    (
                        "pointwise_kernel",
                        Shape::new(vec![1, 1, c.in_channels, c.out_channels]),
                        true,
                    ),
                ];
                if c.use_bias {
                    v.push(("bias", Shape::new(vec![c.out_channels]), true));
                }
                v
            }
            LayerSpec::BatchNorm(b) => {
                let c = Shape::new(vec![b.channels]);
                vec![
                    ("gamma", c.clone(), true),
                    ("beta", c.clone(), true),
                    ("moving_mean", c.clone(), false),
                    ("moving_variance", c, false),
                ]
            }
            LayerSpec::Dense(d) => {
                let mut v = vec![(
                    "weight",
                    Shape::new(vec![d.in_features, d.out_features]),
                    true,
                )];
                if d.use_bias {
                    v.push(("bias", Shape::new(vec![d.out_features]), true));
                }
                v
            }
            _ => vec![],
        }
    }

    /// Seeded initial parameters: He-uniform for convolution kernels,
    /// Glorot-uniform for dense weights, zeros for biases, identity-style
    /// init for batch norm.
    pub fn init_params(&self, rng: &mut impl RngCore) -> Vec<ParamTensor> {
        let he = |fan_in: usize| (6.0 / fan_in as f64).sqrt();
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.param_layout()
            .into_iter()
            .map(|(name, shape, trainable)| {
                let n = shape.numel();
                let values = match (self, name) {
                    (LayerSpec::Conv2D(c), "kernel") => {
                        let limit = he(c.kernel_h * c.kernel_w * c.in_channels);
                        uniform_tensor(shape, n, limit, rng)
                    }
                    (LayerSpec::SeparableConv2D(c), "depthwise_kernel") => {
                        let limit = he(c.kernel_h * c.kernel_w);
                        uniform_tensor(shape, n, limit, rng)
                    }
                    (LayerSpec::SeparableConv2D(c), "pointwise_kernel") => {
                        let limit = he(c.in_channels);
                        uniform_tensor(shape, n, limit, rng)
                    }
                    (LayerSpec::Dense(d), "weight") => {
                        let limit = glorot(d.in_features, d.out_features);
                        uniform_tensor(shape, n, limit, rng)
                    }
                    (LayerSpec::BatchNorm(_), "gamma") => Tensor::full(shape, 1.0),
                    (LayerSpec::BatchNorm(_), "moving_variance") => Tensor::full(shape, 1.0),
                    // beta, moving_mean, biases
                    _ => Tensor::zeros(shape),
                };
                ParamTensor {
                    name: name.to_string(),
                    values,
                    trainable,
                }
            })
            .collect()
    }

    /// (total, trainable) parameter counts from the layout.
    pub fn param_count(&self) -> (usize, usize) {
        let mut total = 0;
        let mut trainable = 0;
        for (_, shape, t) in self.param_layout() {
            total += shape.numel();
            if t {
                trainable += shape.numel();
            }
        }
        (total, trainable)
    }

    /// Output extents given the input extents of each incoming edge
    /// (one edge for every layer except `ResidualAdd`, which takes two).
    pub fn output_dims(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        let single = || -> Result<&[usize]> {
            if inputs.len() != 1 {
                return Err(Error::shape(format!(
                    "layer expects one input, got {}",
                    inputs.len()
                )));
            }
            Ok(inputs[0])
        };
        let image = |dims: &[usize]| -> Result<[usize; 4]> {
            if dims.len() != 4 {
                return Err(Error::shape(format!(
                    "expected NxHxWxC input, got rank {}",
                    dims.len()
                )));
            }
            Ok([dims[0], dims[1], dims[2], dims[3]])
        };
        match self {
            LayerSpec::Conv2D(c) => {
                let [n, h, w, ch] = image(single()?)?;
                if ch != c.in_channels {
                    return Err(Error::shape(format!(
                        "conv expects {} input channels, got {}",
                        c.in_channels, ch
                    )));
                }
                let (oh, _, _) = conv::spatial_out(h, c.kernel_h, c.stride, c.padding)?;
                let (ow, _, _) = conv::spatial_out(w, c.kernel_w, c.stride, c.padding)?;
                Ok(vec![n, oh, ow, c.out_channels])
            }
            LayerSpec::SeparableConv2D(c) => {
                let [n, h, w, ch] = image(single()?)?;
                if ch != c.in_channels {
                    return Err(Error::shape(format!(
                        "separable conv expects {} input channels, got {}",
                        c.in_channels, ch
                    )));
                }
                let (oh, _, _) = conv::spatial_out(h, c.kernel_h, c.stride, c.padding)?;
                let (ow, _, _) = conv::spatial_out(w, c.kernel_w, c.stride, c.padding)?;
                Ok(vec![n, oh, ow, c.out_channels])
            }
            LayerSpec::MaxPool2D(p) => {
                let [n, h, w, ch] = image(single()?)?;
                let (oh, _, _) = conv::spatial_out(h, p.pool_h, p.stride, p.padding)?;
                let (ow, _, _) = conv::spatial_out(w, p.pool_w, p.stride, p.padding)?;
                Ok(vec![n, oh, ow, ch])
            }
            LayerSpec::GlobalAvgPool2D => {
                let [n, _, _, ch] = image(single()?)?;
                Ok(vec![n, ch])
            }
            LayerSpec::BatchNorm(b) => {
                let dims = single()?;
                let ch = *dims.last().ok_or_else(|| {
                    Error::shape("batch norm requires a channel axis".to_string())
                })?;
                if ch != b.channels {
                    return Err(Error::shape(format!(
                        "batch norm expects {} channels, got {}",
                        b.channels, ch
                    )));
                }
                Ok(dims.to_vec())
            }
            LayerSpec::Dense(d) => {
                let dims = single()?;
                if dims.len() != 2 || dims[1] != d.in_features {
                    return Err(Error::shape(format!(
                        "dense expects [N, {}] input, got {:?}",
                        d.in_features, dims
                    )));
                }
                Ok(vec![dims[0], d.out_features])
            }
            LayerSpec::Flatten => {
                let dims = single()?;
                if dims.is_empty() {
                    return Err(Error::shape("flatten requires a batch axis".to_string()));
                }
                Ok(vec![dims[0], dims[1..].iter().product()])
            }
            LayerSpec::ReLU | LayerSpec::Dropout(_) | LayerSpec::Softmax => {
                Ok(single()?.to_vec())
            }
            LayerSpec::ResidualAdd => {
                if inputs.len() != 2 {
                    return Err(Error::shape(format!(
                        "residual add expects two inputs, got {}",
                        inputs.len()
                    )));
                }
                if inputs[0] != inputs[1] {
                    return Err(Error::shape(format!(
                        "residual add on mismatched shapes {:?} and {:?}",
                        inputs[0], inputs[1]
                    )));
                }
                Ok(inputs[0].to_vec())
            }
        }
    }
}

fn uniform_tensor(shape: Shape, n: usize, limit: f64, rng: &mut impl RngCore) -> Tensor {
    let data: Vec<f32> = (0..n).map(|_| rng::uniform_symmetric(rng, limit)).collect();
    Tensor::from_values(shape, data).expect("layout length matches shape")
}

/// Residual (skip) addition: elementwise sum of the main path and the skip path.
pub fn residual_add(main: &Tensor, skip: &Tensor) -> Result<Tensor> {
    main.add(skip)
}
