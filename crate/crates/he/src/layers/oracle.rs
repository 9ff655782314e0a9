//! Unencrypted twin of the frozen stack.
//!
//! Every encrypted layer is checked against these functions; they are also
//! the fast no-encryption reference path used by experiments.

use super::weights::{relu_cubic, FrozenWeights};
use crate::{HeError, Result};

/// Zero-padded 'same' 1-D convolution: out[k] = sum_j w[j] * x[k+j-c] + b.
pub fn conv1d_same(x: &[f64], filter: &[f64], bias: f64) -> Vec<f64> {
    let t = x.len();
    let c = (filter.len() / 2) as isize;
    (0..t as isize)
        .map(|k| {
            let mut acc = bias;
            for (j, &w) in filter.iter().enumerate() {
                let idx = k + j as isize - c;
                if idx >= 0 && (idx as usize) < t {
                    acc += w * x[idx as usize];
                }
            }
            acc
        })
        .collect()
}

/// Row-major matrix-vector product plus bias.
pub fn matvec(mat: &[Vec<f64>], x: &[f64], bias: &[f64]) -> Vec<f64> {
    mat.iter()
        .zip(bias)
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect()
}

/// Stride-1 unpadded sliding mean of window `f`.
pub fn avgpool_valid(x: &[f64], f: usize) -> Vec<f64> {
    (0..x.len() - f + 1)
        .map(|k| x[k..k + f].iter().sum::<f64>() / f as f64)
        .collect()
}

/// Forward pass of one item through the frozen stack:
/// conv -> dense1 -> cubic activation -> pool -> dense2. Dropout is the
/// identity at inference and has no parameters here.
pub fn frozen_forward_one(item: &[f64], w: &FrozenWeights) -> Result<Vec<f64>> {
    let t = w.item_width();
    if item.len() != t {
        return Err(HeError::Shape(format!(
            "item width {} != expected {t}",
            item.len()
        )));
    }
    let conv = conv1d_same(item, &w.conv_filter, w.conv_bias);
    let dense1 = matvec(&w.dense1, &conv, &w.dense1_bias);
    let act: Vec<f64> = dense1
        .iter()
        .map(|&z| relu_cubic(z, &w.relu_coeffs))
        .collect();
    let mut pooled = avgpool_valid(&act, w.pool);
    pooled.resize(t, 0.0); // dense2 consumes the zero-padded width-t vector
    Ok(matvec(&w.dense2, &pooled, &w.dense2_bias))
}

/// Batch version: one output row (width t - pool + 1) per item.
pub fn plaintext_frozen_forward(items: &[Vec<f64>], w: &FrozenWeights) -> Result<Vec<Vec<f64>>> {
    w.validate()?;
    items.iter().map(|it| frozen_forward_one(it, w)).collect()
}
