//! Forward and backward passes.
//!
//! The loss is per-unit sigmoid + binary cross-entropy against one-hot
//! targets, summed over the two output units. The final layer's sigmoid
//! is folded into the loss gradient (a - y), so every dense layer stores
//! its pre-activation for the backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::spec::{Activation, LayerSpec, RELU_CUBIC_COEFFS, RELU_CUBIC_DERIV};
use crate::state::{LayerParams, ModelState};
use crate::{NnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Gradients share the parameter layout.
pub type Gradients = Vec<LayerParams>;

/// Per-layer values stashed during the forward pass.
pub struct ForwardCache {
    /// Input to each layer (inputs[0] is the sample itself).
    inputs: Vec<Vec<f64>>,
    /// Dense/conv pre-activations where an activation applies.
    pre_acts: Vec<Option<Vec<f64>>>,
    /// Dropout masks drawn in train mode (inverted scaling baked in).
    masks: Vec<Option<Vec<f64>>>,
    /// Winning indices for max pools.
    argmax: Vec<Option<Vec<usize>>>,
    pub output: Vec<f64>,
    /// Range of pre-activations seen by the cubic activation, for the
    /// trusted-range warning.
    pub cubic_range: Option<(f64, f64)>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn apply_activation(act: Activation, z: &[f64]) -> Vec<f64> {
    match act {
        Activation::Linear => z.to_vec(),
        Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
        Activation::ReluCubic => z
            .iter()
            .map(|&v| {
                let c = RELU_CUBIC_COEFFS;
                ((c[0] * v + c[1]) * v + c[2]) * v + c[3]
            })
            .collect(),
        Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
    }
}

fn activation_deriv(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Linear => 1.0,
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::ReluCubic => {
            let d = RELU_CUBIC_DERIV;
            (d[0] * z + d[1]) * z + d[2]
        }
        Activation::Sigmoid => {
            let s = sigmoid(z);
            s * (1.0 - s)
        }
    }
}

/// Run a sample through the network, caching what backward needs.
/// Dropout draws from `rng` only in train mode.
pub fn forward(
    state: &ModelState,
    sample: &[f64],
    mode: Mode,
    rng: &mut ChaCha20Rng,
) -> Result<ForwardCache> {
    if sample.len() != state.spec.input_width {
        return Err(NnError::Shape(format!(
            "input width {} != expected {}",
            sample.len(),
            state.spec.input_width
        )));
    }
    let n_layers = state.spec.layers.len();
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(n_layers + 1),
        pre_acts: Vec::with_capacity(n_layers),
        masks: Vec::with_capacity(n_layers),
        argmax: Vec::with_capacity(n_layers),
        output: Vec::new(),
        cubic_range: None,
    };
    let mut x = sample.to_vec();
    for (layer, params) in state.spec.layers.iter().zip(&state.params) {
        cache.inputs.push(x.clone());
        let mut pre = None;
        let mut mask = None;
        let mut winners = None;
        x = match (layer, params) {
            (LayerSpec::Conv1d { filter }, LayerParams::Conv { w, b }) => {
                let c = (filter / 2) as isize;
                let t = x.len();
                (0..t as isize)
                    .map(|k| {
                        let mut acc = *b;
                        for (j, &wj) in w.iter().enumerate() {
                            let idx = k + j as isize - c;
                            if idx >= 0 && (idx as usize) < t {
                                acc += wj * x[idx as usize];
                            }
                        }
                        acc
                    })
                    .collect()
            }
            (LayerSpec::Dense { activation, .. }, LayerParams::Dense { w, b }) => {
                let z: Vec<f64> = w
                    .iter()
                    .zip(b)
                    .map(|(row, bi)| row.iter().zip(&x).map(|(wi, xi)| wi * xi).sum::<f64>() + bi)
                    .collect();
                if *activation == Activation::ReluCubic {
                    let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    cache.cubic_range = Some(match cache.cubic_range {
                        None => (lo, hi),
                        Some((a, b)) => (a.min(lo), b.max(hi)),
                    });
                }
                let out = apply_activation(*activation, &z);
                pre = Some(z);
                out
            }
            (LayerSpec::AvgPool { size }, LayerParams::None) => (0..x.len() - size + 1)
                .map(|k| x[k..k + size].iter().sum::<f64>() / *size as f64)
                .collect(),
            (LayerSpec::MaxPool { size }, LayerParams::None) => {
                let mut idx = Vec::with_capacity(x.len() - size + 1);
                let out = (0..x.len() - size + 1)
                    .map(|k| {
                        // First maximal index wins; deterministic backward.
                        let mut best = k;
                        for j in k + 1..k + size {
                            if x[j] > x[best] {
                                best = j;
                            }
                        }
                        idx.push(best);
                        x[best]
                    })
                    .collect();
                winners = Some(idx);
                out
            }
            (LayerSpec::Dropout { rate }, LayerParams::None) => {
                if mode == Mode::Train && *rate > 0.0 {
                    let keep = 1.0 - rate;
                    let m: Vec<f64> = (0..x.len())
                        .map(|_| {
                            if rng.gen::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let out = x.iter().zip(&m).map(|(v, mi)| v * mi).collect();
                    mask = Some(m);
                    out
                } else {
                    x
                }
            }
            _ => return Err(NnError::Shape("layer/parameter kind mismatch".into())),
        };
        cache.pre_acts.push(pre);
        cache.masks.push(mask);
        cache.argmax.push(winners);
    }
    cache.inputs.push(x.clone());
    cache.output = x;
    Ok(cache)
}

/// Forward through the first `upto` layers only (inference mode); used to
/// extract frozen features without encryption.
pub fn forward_prefix(state: &ModelState, sample: &[f64], upto: usize) -> Result<Vec<f64>> {
    let mut truncated = state.clone();
    truncated.spec.layers.truncate(upto);
    truncated.params.truncate(upto);
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    Ok(forward(&truncated, sample, Mode::Infer, &mut rng)?.output)
}

/// Binary cross-entropy of sigmoid outputs against a one-hot target,
/// summed over units.
pub fn bce_loss(output: &[f64], label: u8) -> f64 {
    let target = [
        if label == 0 { 1.0 } else { 0.0 },
        if label == 1 { 1.0 } else { 0.0 },
    ];
    output
        .iter()
        .zip(target)
        .map(|(&a, y)| {
            let a = a.clamp(1e-12, 1.0 - 1e-12);
            -(y * a.ln() + (1.0 - y) * (1.0 - a).ln())
        })
        .sum()
}

/// Exact gradients of the loss for one sample; writes into `grads`
/// (overwriting), which must share the state's parameter layout.
pub fn backward(
    state: &ModelState,
    cache: &ForwardCache,
    label: u8,
    grads: &mut Gradients,
) -> Result<()> {
    let last = state.spec.layers.len() - 1;
    // Sigmoid + BCE fold: dL/dz = a - y at the output layer.
    let target = [
        if label == 0 { 1.0 } else { 0.0 },
        if label == 1 { 1.0 } else { 0.0 },
    ];
    let mut upstream: Vec<f64> = cache
        .output
        .iter()
        .zip(target)
        .map(|(&a, y)| a - y)
        .collect();

    for i in (0..=last).rev() {
        let x = &cache.inputs[i];
        upstream = match (&state.spec.layers[i], &state.params[i], &mut grads[i]) {
            (
                LayerSpec::Dense { activation, .. },
                LayerParams::Dense { w, .. },
                LayerParams::Dense { w: gw, b: gb },
            ) => {
                let z = cache.pre_acts[i]
                    .as_ref()
                    .expect("dense cached pre-activation");
                // dL/dz: at the output layer the sigmoid is already folded
                // into upstream; hidden layers apply the derivative here.
                let dz: Vec<f64> = if i == last {
                    upstream
                } else {
                    upstream
                        .iter()
                        .zip(z)
                        .map(|(&u, &zi)| u * activation_deriv(*activation, zi))
                        .collect()
                };
                for (grow, dzi) in gw.iter_mut().zip(&dz) {
                    for (g, &xi) in grow.iter_mut().zip(x) {
                        *g = dzi * xi;
                    }
                }
                for (g, &dzi) in gb.iter_mut().zip(&dz) {
                    *g = dzi;
                }
                // dx = W^T dz
                let mut dx = vec![0.0; x.len()];
                for (row, &dzi) in w.iter().zip(&dz) {
                    for (d, &wi) in dx.iter_mut().zip(row) {
                        *d += wi * dzi;
                    }
                }
                dx
            }
            (
                LayerSpec::Conv1d { filter },
                LayerParams::Conv { w, .. },
                LayerParams::Conv { w: gw, b: gb },
            ) => {
                let c = (filter / 2) as isize;
                let t = x.len();
                for g in gw.iter_mut() {
                    *g = 0.0;
                }
                *gb = upstream.iter().sum();
                for (j, g) in gw.iter_mut().enumerate() {
                    for (k, &u) in upstream.iter().enumerate() {
                        let idx = k as isize + j as isize - c;
                        if idx >= 0 && (idx as usize) < t {
                            *g += u * x[idx as usize];
                        }
                    }
                }
                let mut dx = vec![0.0; t];
                for (k, &u) in upstream.iter().enumerate() {
                    for (j, &wj) in w.iter().enumerate() {
                        let idx = k as isize + j as isize - c;
                        if idx >= 0 && (idx as usize) < t {
                            dx[idx as usize] += u * wj;
                        }
                    }
                }
                dx
            }
            (LayerSpec::AvgPool { size }, LayerParams::None, LayerParams::None) => {
                let mut dx = vec![0.0; x.len()];
                let f = *size as f64;
                for (k, &u) in upstream.iter().enumerate() {
                    for d in dx.iter_mut().skip(k).take(*size) {
                        *d += u / f;
                    }
                }
                dx
            }
            (LayerSpec::MaxPool { .. }, LayerParams::None, LayerParams::None) => {
                let winners = cache.argmax[i].as_ref().expect("max pool cached winners");
                let mut dx = vec![0.0; x.len()];
                for (&u, &win) in upstream.iter().zip(winners) {
                    dx[win] += u;
                }
                dx
            }
            (LayerSpec::Dropout { .. }, LayerParams::None, LayerParams::None) => {
                match &cache.masks[i] {
                    Some(m) => upstream.iter().zip(m).map(|(&u, &mi)| u * mi).collect(),
                    None => upstream,
                }
            }
            _ => return Err(NnError::Shape("layer/parameter kind mismatch".into())),
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::ModelSpec;
    use crate::state::ModelState;
    use rand::SeedableRng;

    fn toy_spec() -> ModelSpec {
        // Width 12, every layer type: conv -> dense(cubic) -> avgpool ->
        // maxpool -> dense(relu) -> dense(sigmoid).
        ModelSpec {
            input_width: 12,
            layers: vec![
                LayerSpec::Conv1d { filter: 3 },
                LayerSpec::Dense {
                    units: 12,
                    activation: Activation::ReluCubic,
                },
                LayerSpec::AvgPool { size: 3 },
                LayerSpec::MaxPool { size: 3 },
                LayerSpec::Dense {
                    units: 8,
                    activation: Activation::Relu,
                },
                LayerSpec::Dense {
                    units: 2,
                    activation: Activation::Sigmoid,
                },
            ],
            frozen_boundary: None,
        }
    }

    #[test]
    fn inference_is_deterministic_despite_dropout_spec() {
        let mut spec = toy_spec();
        spec.layers.insert(4, LayerSpec::Dropout { rate: 0.5 });
        let state = ModelState::init(&spec, 3).unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i as f64 - 6.0) / 6.0).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a = forward(&state, &x, Mode::Infer, &mut rng).unwrap().output;
        let b = forward(&state, &x, Mode::Infer, &mut rng).unwrap().output;
        assert_eq!(a, b, "dropout must be identity at inference");
    }

    #[test]
    fn zero_weights_give_half_sigmoid() {
        let spec = toy_spec();
        let mut state = ModelState::init(&spec, 4).unwrap();
        for p in &mut state.params {
            p.scale_in_place(0.0);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let out = forward(&state, &vec![0.3; 12], Mode::Infer, &mut rng)
            .unwrap()
            .output;
        // All-zero pre-activations at the sigmoid... except the cubic
        // activation's constant term flows through zero dense weights, so
        // the output stays sigma(0) = 0.5 exactly.
        assert!((out[0] - 0.5).abs() < 1e-12);
        assert!((out[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn finite_differences_agree_for_every_layer_type() {
        let spec = toy_spec();
        let state = ModelState::init(&spec, 5).unwrap();
        let x: Vec<f64> = (0..12)
            .map(|i| ((i * 31 % 13) as f64 - 6.0) / 7.0)
            .collect();
        let label = 1u8;
        let mut rng = ChaCha20Rng::seed_from_u64(3);

        let cache = forward(&state, &x, Mode::Infer, &mut rng).unwrap();
        let mut grads: Gradients = state.params.iter().map(|p| p.zeros_like()).collect();
        backward(&state, &cache, label, &mut grads).unwrap();

        let h = 1e-5;
        let mut checked = 0usize;
        for li in 0..state.params.len() {
            let analytic = grads[li].clone();
            let perturb = |state: &ModelState, li: usize, pi: usize, delta: f64| -> f64 {
                let mut s = state.clone();
                let mut count = 0usize;
                match &mut s.params[li] {
                    LayerParams::Conv { w, b } => {
                        let total = w.len() + 1;
                        assert!(pi < total);
                        if pi < w.len() {
                            w[pi] += delta;
                        } else {
                            *b += delta;
                        }
                        count = total;
                    }
                    LayerParams::Dense { w, b } => {
                        let cols = w[0].len();
                        let total = w.len() * cols + b.len();
                        assert!(pi < total);
                        if pi < w.len() * cols {
                            w[pi / cols][pi % cols] += delta;
                        } else {
                            b[pi - w.len() * cols] += delta;
                        }
                        count = total;
                    }
                    LayerParams::None => {}
                }
                let _ = count;
                let mut r = ChaCha20Rng::seed_from_u64(3);
                let c = forward(&s, &x, Mode::Infer, &mut r).unwrap();
                bce_loss(&c.output, label)
            };
            let param_count = {
                let mut n = 0usize;
                state.params[li].for_each(|_| n += 1);
                n
            };
            // Sample a handful of parameters per layer; dense layers are
            // big and the check is O(params * forward).
            let stride = (param_count / 25).max(1);
            for pi in (0..param_count).step_by(stride) {
                let fd = (perturb(&state, li, pi, h) - perturb(&state, li, pi, -h)) / (2.0 * h);
                let mut flat = Vec::new();
                analytic.for_each(|g| flat.push(g));
                let a = flat[pi];
                let denom = a.abs().max(fd.abs()).max(1e-6);
                assert!(
                    (a - fd).abs() / denom < 1e-4,
                    "layer {li} param {pi}: analytic {a} vs fd {fd}"
                );
                checked += 1;
            }
        }
        assert!(checked > 50, "checked {checked} parameters");
    }

    #[test]
    fn stationary_point_has_zero_output_gradient() {
        // All-zero input and weights, targets absent: with output 0.5 and
        // one-hot target, dz = a - y; checking the documented contract that
        // dz = 0 when the output matches the target exactly needs a
        // symmetric 0.5 target vector, which one-hot labels cannot express;
        // instead verify the gradient matches (a - y) structurally.
        let spec = toy_spec();
        let mut state = ModelState::init(&spec, 6).unwrap();
        for p in &mut state.params {
            p.scale_in_place(0.0);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let cache = forward(&state, &vec![0.0; 12], Mode::Infer, &mut rng).unwrap();
        let mut grads: Gradients = state.params.iter().map(|p| p.zeros_like()).collect();
        backward(&state, &cache, 0, &mut grads).unwrap();
        // Output-layer bias gradient equals a - y = (0.5 - 1, 0.5 - 0).
        match &grads[5] {
            LayerParams::Dense { b, .. } => {
                assert!((b[0] + 0.5).abs() < 1e-12);
                assert!((b[1] - 0.5).abs() < 1e-12);
            }
            _ => panic!("dense expected"),
        }
    }

    #[test]
    fn cubic_derivative_reference_value() {
        assert!((activation_deriv(Activation::ReluCubic, 0.0) - 0.59259).abs() < 1e-12);
    }

    #[test]
    fn finite_differences_cover_dropout_with_fixed_masks() {
        // Train-mode forward with a reseeded RNG redraws identical masks,
        // so central differences remain valid through the dropout layer.
        let mut spec = toy_spec();
        spec.layers.insert(4, LayerSpec::Dropout { rate: 0.4 });
        let state = ModelState::init(&spec, 7).unwrap();
        let x: Vec<f64> = (0..12)
            .map(|i| ((i * 17 % 11) as f64 - 5.0) / 6.0)
            .collect();
        let label = 0u8;
        let run = |s: &ModelState| -> (ForwardCache, f64) {
            let mut rng = ChaCha20Rng::seed_from_u64(42);
            let c = forward(s, &x, Mode::Train, &mut rng).unwrap();
            let l = bce_loss(&c.output, label);
            (c, l)
        };
        let (cache, _) = run(&state);
        let mut grads: Gradients = state.params.iter().map(|p| p.zeros_like()).collect();
        backward(&state, &cache, label, &mut grads).unwrap();
        // Check a dense layer downstream of the dropout (layer 5).
        let h = 1e-5;
        let mut flat = Vec::new();
        grads[5].for_each(|g| flat.push(g));
        for pi in (0..flat.len()).step_by(7) {
            let mut plus = state.clone();
            let mut minus = state.clone();
            if let (LayerParams::Dense { w, b }, LayerParams::Dense { w: wm, b: bm }) =
                (&mut plus.params[5], &mut minus.params[5])
            {
                let cols = w[0].len();
                if pi < w.len() * cols {
                    w[pi / cols][pi % cols] += h;
                    wm[pi / cols][pi % cols] -= h;
                } else {
                    b[pi - w.len() * cols] += h;
                    bm[pi - w.len() * cols] -= h;
                }
            }
            let fd = (run(&plus).1 - run(&minus).1) / (2.0 * h);
            let a = flat[pi];
            let denom = a.abs().max(fd.abs()).max(1e-6);
            assert!(
                (a - fd).abs() / denom < 1e-4,
                "dropout-path param {pi}: analytic {a} vs fd {fd}"
            );
        }
    }
}
