//! Trainable parameter tensors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::spec::{LayerSpec, ModelSpec};
use crate::{NnError, Result};

/// Parameters of one layer; pools and dropout own nothing.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Conv { w: Vec<f64>, b: f64 },
    Dense { w: Vec<Vec<f64>>, b: Vec<f64> },
    None,
}

impl LayerParams {
    pub fn zeros_like(&self) -> LayerParams {
        match self {
            LayerParams::Conv { w, .. } => LayerParams::Conv {
                w: vec![0.0; w.len()],
                b: 0.0,
            },
            LayerParams::Dense { w, b } => LayerParams::Dense {
                w: w.iter().map(|r| vec![0.0; r.len()]).collect(),
                b: vec![0.0; b.len()],
            },
            LayerParams::None => LayerParams::None,
        }
    }

    /// Apply f to every parameter of self paired with other.
    pub fn zip_apply(&mut self, other: &LayerParams, mut f: impl FnMut(&mut f64, f64)) {
        match (self, other) {
            (LayerParams::Conv { w, b }, LayerParams::Conv { w: ow, b: ob }) => {
                for (x, &y) in w.iter_mut().zip(ow) {
                    f(x, y);
                }
                f(b, *ob);
            }
            (LayerParams::Dense { w, b }, LayerParams::Dense { w: ow, b: ob }) => {
                for (row, orow) in w.iter_mut().zip(ow) {
                    for (x, &y) in row.iter_mut().zip(orow) {
                        f(x, y);
                    }
                }
                for (x, &y) in b.iter_mut().zip(ob) {
                    f(x, y);
                }
            }
            (LayerParams::None, LayerParams::None) => {}
            _ => panic!("layer parameter shape mismatch"),
        }
    }

    pub fn for_each(&self, mut f: impl FnMut(f64)) {
        match self {
            LayerParams::Conv { w, b } => {
                w.iter().for_each(|&x| f(x));
                f(*b);
            }
            LayerParams::Dense { w, b } => {
                w.iter().flatten().for_each(|&x| f(x));
                b.iter().for_each(|&x| f(x));
            }
            LayerParams::None => {}
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        match self {
            LayerParams::Conv { w, b } => {
                w.iter_mut().for_each(|x| *x *= s);
                *b *= s;
            }
            LayerParams::Dense { w, b } => {
                w.iter_mut().flatten().for_each(|x| *x *= s);
                b.iter_mut().for_each(|x| *x *= s);
            }
            LayerParams::None => {}
        }
    }
}

/// Model parameters plus the seed and epoch bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub spec: ModelSpec,
    pub params: Vec<LayerParams>,
    pub seed: u64,
    pub epochs_trained: usize,
}

impl ModelState {
    /// Uniform fan-scaled initialization; biases start at zero.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.widths()?; // validate
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut width = spec.input_width;
        let mut params = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            let p = match layer {
                LayerSpec::Conv1d { filter } => {
                    let a = (6.0 / (2 * filter) as f64).sqrt();
                    LayerParams::Conv {
                        w: (0..*filter).map(|_| rng.gen_range(-a..a)).collect(),
                        b: 0.0,
                    }
                }
                LayerSpec::Dense { units, .. } => {
                    let a = (6.0 / (width + units) as f64).sqrt();
                    let w = (0..*units)
                        .map(|_| (0..width).map(|_| rng.gen_range(-a..a)).collect())
                        .collect();
                    LayerParams::Dense {
                        w,
                        b: vec![0.0; *units],
                    }
                }
                _ => LayerParams::None,
            };
            width = match layer {
                LayerSpec::Dense { units, .. } => *units,
                LayerSpec::AvgPool { size } | LayerSpec::MaxPool { size } => width - size + 1,
                _ => width,
            };
            params.push(p);
        }
        Ok(ModelState {
            spec: spec.clone(),
            params,
            seed,
            epochs_trained: 0,
        })
    }

    pub fn validate_shapes(&self) -> Result<()> {
        if self.params.len() != self.spec.layers.len() {
            return Err(NnError::Shape("parameter/layer count mismatch".into()));
        }
        let mut width = self.spec.input_width;
        for (i, (layer, p)) in self.spec.layers.iter().zip(&self.params).enumerate() {
            match (layer, p) {
                (LayerSpec::Conv1d { filter }, LayerParams::Conv { w, .. }) => {
                    if w.len() != *filter {
                        return Err(NnError::Shape(format!("layer {i}: conv width")));
                    }
                }
                (LayerSpec::Dense { units, .. }, LayerParams::Dense { w, b }) => {
                    if w.len() != *units || b.len() != *units || w.iter().any(|r| r.len() != width)
                    {
                        return Err(NnError::Shape(format!("layer {i}: dense shape")));
                    }
                }
                (LayerSpec::AvgPool { .. }, LayerParams::None)
                | (LayerSpec::MaxPool { .. }, LayerParams::None)
                | (LayerSpec::Dropout { .. }, LayerParams::None) => {}
                _ => return Err(NnError::Shape(format!("layer {i}: kind mismatch"))),
            }
            width = match layer {
                LayerSpec::Dense { units, .. } => *units,
                LayerSpec::AvgPool { size } | LayerSpec::MaxPool { size } => width - size + 1,
                _ => width,
            };
            if self.params.iter().any(|p| {
                if let LayerParams::Dense { w, b } = p {
                    w.iter().flatten().any(|x| !x.is_finite()) || b.iter().any(|x| !x.is_finite())
                } else {
                    false
                }
            }) {
                return Err(NnError::Shape("non-finite parameter".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_shapes_match_spec() {
        let spec = ModelSpec::server(16, 3, 3);
        let state = ModelState::init(&spec, 1).unwrap();
        assert!(state.validate_shapes().is_ok());
        match &state.params[1] {
            LayerParams::Dense { w, b } => {
                assert_eq!(w.len(), 16);
                assert_eq!(w[0].len(), 16);
                assert_eq!(b.len(), 16);
            }
            _ => panic!("dense expected"),
        }
        match &state.params[4] {
            LayerParams::Dense { w, .. } => {
                assert_eq!(w.len(), 14);
                assert_eq!(w[0].len(), 14);
            }
            _ => panic!("dense expected"),
        }
    }

    #[test]
    fn init_is_deterministic() {
        let spec = ModelSpec::client(14, 3);
        assert_eq!(
            ModelState::init(&spec, 9).unwrap(),
            ModelState::init(&spec, 9).unwrap()
        );
        assert_ne!(
            ModelState::init(&spec, 9).unwrap(),
            ModelState::init(&spec, 10).unwrap()
        );
    }
}
