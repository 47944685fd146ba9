//! Fixed architecture descriptors: the 11-output MNIST CNN at full and desk
//! scale, and the 3-output toy variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
    },
    Relu,
    MaxPool2d {
        size: usize,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchTag {
    MnistFull,
    MnistDesk,
    Toy,
}

impl ArchTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArchTag::MnistFull => "mnist-full",
            ArchTag::MnistDesk => "mnist-desk",
            ArchTag::Toy => "toy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mnist-full" => Ok(ArchTag::MnistFull),
            "mnist-desk" => Ok(ArchTag::MnistDesk),
            "toy" => Ok(ArchTag::Toy),
            other => Err(Error::InvalidArgument(format!(
                "unknown architecture tag {other:?}"
            ))),
        }
    }

    pub fn descriptor(&self) -> ArchitectureDescriptor {
        match self {
            ArchTag::MnistFull => ArchitectureDescriptor::mnist(32, 64, 128, ArchTag::MnistFull),
            ArchTag::MnistDesk => ArchitectureDescriptor::mnist(8, 16, 64, ArchTag::MnistDesk),
            ArchTag::Toy => ArchitectureDescriptor::toy(),
        }
    }
}

impl std::fmt::Display for ArchTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureDescriptor {
    pub tag: ArchTag,
    /// HWC input shape.
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    /// Total output count, including the null slot (last index).
    pub output_classes: usize,
    pub digit_classes: usize,
}

impl ArchitectureDescriptor {
    /// The MNIST stack: conv 3x3, relu, conv 3x3, relu, maxpool 2x2,
    /// dropout 0.25, flatten, dense, dropout 0.5, dense 11. Full scale uses
    /// channels 32/64 and 128 hidden units; desk scale 8/16 and 64.
    pub fn mnist(conv1: usize, conv2: usize, hidden: usize, tag: ArchTag) -> Self {
        use LayerSpec::*;
        let flat = 12 * 12 * conv2;
        Self {
            tag,
            input_shape: [28, 28, 1],
            layers: vec![
                Conv2d {
                    in_ch: 1,
                    out_ch: conv1,
                    kh: 3,
                    kw: 3,
                },
                Relu,
                Conv2d {
                    in_ch: conv1,
                    out_ch: conv2,
                    kh: 3,
                    kw: 3,
                },
                Relu,
                MaxPool2d { size: 2 },
                Dropout { rate: 0.25 },
                Flatten,
                Dense {
                    in_dim: flat,
                    out_dim: hidden,
                },
                Dropout { rate: 0.5 },
                Dense {
                    in_dim: hidden,
                    out_dim: 11,
                },
            ],
            output_classes: 11,
            digit_classes: 10,
        }
    }

    /// The 3-pixel toy stack, same layer ordering with 2-pixel (1x2) conv
    /// kernels of 8 then 16 channels, dense 32, dense 3.
    ///
    /// Shape trace: (1,3,1) -conv-> (1,2,8) -conv-> (1,1,16). Max pooling is
    /// skipped because the spatial extent after the second conv is already 1;
    /// dropout/flatten/dense follow as in the MNIST stack.
    pub fn toy() -> Self {
        use LayerSpec::*;
        Self {
            tag: ArchTag::Toy,
            input_shape: [1, 3, 1],
            layers: vec![
                Conv2d {
                    in_ch: 1,
                    out_ch: 8,
                    kh: 1,
                    kw: 2,
                },
                Relu,
                Conv2d {
                    in_ch: 8,
                    out_ch: 16,
                    kh: 1,
                    kw: 2,
                },
                Relu,
                Dropout { rate: 0.25 },
                Flatten,
                Dense {
                    in_dim: 16,
                    out_dim: 32,
                },
                Dropout { rate: 0.5 },
                Dense {
                    in_dim: 32,
                    out_dim: 3,
                },
            ],
            output_classes: 3,
            digit_classes: 2,
        }
    }

    /// Index of the null class (always the last output).
    pub fn null_class(&self) -> usize {
        self.output_classes - 1
    }

    /// The per-layer output shapes, starting from the input shape.
    pub fn shape_trace(&self) -> Vec<Vec<usize>> {
        let mut shape: Vec<usize> = self.input_shape.to_vec();
        let mut trace = vec![shape.clone()];
        for layer in &self.layers {
            shape = match *layer {
                LayerSpec::Conv2d {
                    out_ch, kh, kw, ..
                } => vec![shape[0] - kh + 1, shape[1] - kw + 1, out_ch],
                LayerSpec::Relu | LayerSpec::Dropout { .. } => shape,
                LayerSpec::MaxPool2d { size } => {
                    vec![shape[0] / size, shape[1] / size, shape[2]]
                }
                LayerSpec::Flatten => vec![shape.iter().product()],
                LayerSpec::Dense { out_dim, .. } => vec![out_dim],
            };
            trace.push(shape.clone());
        }
        trace
    }
}
