//! Layer architecture descriptors.

use crate::{NnError, Result};

/// Cubic stand-in for ReLU used by the server's hidden dense layer, kept
/// bit-identical to the encrypted stack's coefficients ([c3, c2, c1, c0]).
pub const RELU_CUBIC_COEFFS: [f64; 4] = [-0.0061728, 0.092593, 0.59259, 0.49383];

/// Derivative of the cubic: a2*z^2 + a1*z + a0.
pub const RELU_CUBIC_DERIV: [f64; 3] = [-0.0185184, 0.185186, 0.59259];

/// Input range the cubic is trusted on; the trainer warns outside it.
pub const RELU_CUBIC_TRUSTED_RANGE: (f64, f64) = (-10.0, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    /// The degree-3 ReLU approximation (exactly what runs under encryption).
    ReluCubic,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// Single-channel zero-padded 'same' 1-D convolution; width preserved.
    Conv1d { filter: usize },
    /// Fully connected layer of `units` outputs.
    Dense {
        units: usize,
        activation: Activation,
    },
    /// Stride-1 unpadded average pool; width shrinks by size-1.
    AvgPool { size: usize },
    /// Stride-1 unpadded max pool; width shrinks by size-1.
    MaxPool { size: usize },
    /// Inverted-scaling dropout; identity at inference.
    Dropout { rate: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
    /// Number of leading layers frozen after source training (server spec
    /// only).
    pub frozen_boundary: Option<usize>,
}

impl ModelSpec {
    /// The server stack: conv(f) -> dense(t, cubic relu) -> avgpool ->
    /// dropout -> dense(t-pool+1) -> dense(2, sigmoid). The first five
    /// layers are the frozen prefix.
    pub fn server(input_width: usize, conv_filter: usize, pool: usize) -> Self {
        let t = input_width;
        let pooled = t - pool + 1;
        ModelSpec {
            input_width,
            layers: vec![
                LayerSpec::Conv1d {
                    filter: conv_filter,
                },
                LayerSpec::Dense {
                    units: t,
                    activation: Activation::ReluCubic,
                },
                LayerSpec::AvgPool { size: pool },
                LayerSpec::Dropout { rate: 0.2 },
                LayerSpec::Dense {
                    units: pooled,
                    activation: Activation::Linear,
                },
                LayerSpec::Dense {
                    units: 2,
                    activation: Activation::Sigmoid,
                },
            ],
            frozen_boundary: Some(5),
        }
    }

    /// The production server spec (widths 768 -> 768 -> 766 -> 766 -> 2).
    pub fn server_default() -> Self {
        Self::server(768, 9, 3)
    }

    /// The client fine-tuning stack consuming frozen features:
    /// dense(w, relu) -> maxpool -> dropout -> dense(w-pool+1) ->
    /// dense(2, sigmoid).
    pub fn client(feature_width: usize, pool: usize) -> Self {
        let w = feature_width;
        let pooled = w - pool + 1;
        ModelSpec {
            input_width: w,
            layers: vec![
                LayerSpec::Dense {
                    units: w,
                    activation: Activation::Relu,
                },
                LayerSpec::MaxPool { size: pool },
                LayerSpec::Dropout { rate: 0.2 },
                LayerSpec::Dense {
                    units: pooled,
                    activation: Activation::Linear,
                },
                LayerSpec::Dense {
                    units: 2,
                    activation: Activation::Sigmoid,
                },
            ],
            frozen_boundary: None,
        }
    }

    /// The production client spec (widths 766 -> 766 -> 764 -> 764 -> 2).
    pub fn client_default() -> Self {
        Self::client(766, 3)
    }

    /// Output width of each layer in order.
    pub fn widths(&self) -> Result<Vec<usize>> {
        let mut w = self.input_width;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            w = match layer {
                LayerSpec::Conv1d { filter } => {
                    if filter % 2 == 0 || *filter == 0 {
                        return Err(NnError::Shape(format!(
                            "layer {i}: conv filter must be odd, got {filter}"
                        )));
                    }
                    w
                }
                LayerSpec::Dense { units, .. } => *units,
                LayerSpec::AvgPool { size } | LayerSpec::MaxPool { size } => {
                    if *size == 0 || *size > w {
                        return Err(NnError::Shape(format!(
                            "layer {i}: pool size {size} out of range for width {w}"
                        )));
                    }
                    w - size + 1
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(NnError::Shape(format!(
                            "layer {i}: dropout rate {rate} out of [0, 1)"
                        )));
                    }
                    w
                }
            };
            out.push(w);
        }
        Ok(out)
    }

    pub fn output_width(&self) -> Result<usize> {
        Ok(*self.widths()?.last().unwrap_or(&self.input_width))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn production_width_chains() {
        let server = ModelSpec::server_default();
        assert_eq!(server.widths().unwrap(), vec![768, 768, 766, 766, 766, 2]);
        assert_eq!(server.frozen_boundary, Some(5));

        let client = ModelSpec::client_default();
        assert_eq!(client.widths().unwrap(), vec![766, 764, 764, 764, 2]);
    }

    #[test]
    fn invalid_layers_rejected() {
        let mut spec = ModelSpec::server_default();
        spec.layers[0] = LayerSpec::Conv1d { filter: 4 };
        assert!(spec.widths().is_err());
        let mut spec = ModelSpec::server_default();
        spec.layers[3] = LayerSpec::Dropout { rate: 1.0 };
        assert!(spec.widths().is_err());
    }
}
