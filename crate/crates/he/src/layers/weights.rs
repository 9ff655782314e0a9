//! Weights of the frozen server stack.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::{HeError, Result};

/// Default cubic used in place of ReLU inside the encrypted stack,
/// ordered [c3, c2, c1, c0].
pub const RELU_CUBIC_COEFFS: [f64; 4] = [-0.0061728, 0.092593, 0.59259, 0.49383];

/// Derivative coefficients of the default cubic, ordered [a2, a1, a0].
pub const RELU_CUBIC_DERIV_COEFFS: [f64; 3] = [-0.0185184, 0.185186, 0.59259];

/// Input range on which the cubic is trusted; trainers warn when
/// pre-activations leave it.
pub const RELU_CUBIC_TRUSTED_RANGE: (f64, f64) = (-10.0, 10.0);

/// Evaluate the activation cubic at z.
pub fn relu_cubic(z: f64, c: &[f64; 4]) -> f64 {
    ((c[0] * z + c[1]) * z + c[2]) * z + c[3]
}

/// Frozen-stack parameters: 1-D convolution, a square dense layer, the
/// pooled dense layer, and the activation cubic. Widths are generic in t;
/// the production stack uses t = 768 with filter 9 and pool 3 (so the
/// second dense layer is 766 x 768).
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenWeights {
    /// Convolution taps, odd length.
    pub conv_filter: Vec<f64>,
    pub conv_bias: f64,
    /// t x t matrix, row major.
    pub dense1: Vec<Vec<f64>>,
    pub dense1_bias: Vec<f64>,
    /// (t - pool + 1) x t matrix; its input is the pool output zero-padded
    /// back to width t.
    pub dense2: Vec<Vec<f64>>,
    pub dense2_bias: Vec<f64>,
    /// Activation coefficients [c3, c2, c1, c0].
    pub relu_coeffs: [f64; 4],
    /// Pooling window (stride 1, unpadded).
    pub pool: usize,
}

impl FrozenWeights {
    pub fn item_width(&self) -> usize {
        self.dense1.len()
    }

    /// Width after the valid pooling stage (t - pool + 1).
    pub fn output_width(&self) -> usize {
        self.item_width() - self.pool + 1
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.item_width();
        if self.conv_filter.is_empty() || self.conv_filter.len() % 2 == 0 {
            return Err(HeError::Shape(
                "convolution filter length must be odd".into(),
            ));
        }
        if self.pool < 1 || self.pool > t {
            return Err(HeError::Shape(format!(
                "pool size {} out of range",
                self.pool
            )));
        }
        if self.dense1.iter().any(|r| r.len() != t) {
            return Err(HeError::Shape("dense1 must be square t x t".into()));
        }
        if self.dense1_bias.len() != t {
            return Err(HeError::Shape("dense1 bias width mismatch".into()));
        }
        let out = self.output_width();
        if self.dense2.len() != out || self.dense2.iter().any(|r| r.len() != t) {
            return Err(HeError::Shape(format!(
                "dense2 must be {out} x {t} (pool-valid rows over padded input)"
            )));
        }
        if self.dense2_bias.len() != out {
            return Err(HeError::Shape("dense2 bias width mismatch".into()));
        }
        if self.relu_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(HeError::Shape(
                "activation coefficients must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Random weights with fan-in scaling, for tests and benchmarks.
    pub fn random(t: usize, conv_filter: usize, pool: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut mat = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            (0..rows)
                .map(|_| (0..cols).map(|_| rng.gen_range(-a..a)).collect())
                .collect()
        };
        let dense1 = mat(t, t);
        let dense2 = mat(t - pool + 1, t);
        let mut rng2 = ChaCha20Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
        FrozenWeights {
            conv_filter: (0..conv_filter)
                .map(|_| rng2.gen_range(-0.5..0.5))
                .collect(),
            conv_bias: rng2.gen_range(-0.1..0.1),
            dense1,
            dense1_bias: (0..t).map(|_| rng2.gen_range(-0.1..0.1)).collect(),
            dense2,
            dense2_bias: (0..t - pool + 1)
                .map(|_| rng2.gen_range(-0.1..0.1))
                .collect(),
            relu_coeffs: RELU_CUBIC_COEFFS,
            pool,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_reference_values() {
        let c = RELU_CUBIC_COEFFS;
        assert!((relu_cubic(0.0, &c) - 0.49383).abs() < 1e-12);
        assert!((relu_cubic(1.0, &c) - 1.1728402).abs() < 1e-7);
        assert!(relu_cubic(-1.0, &c).abs() < 1e-5); // 5.8e-6
    }

    #[test]
    fn validation_catches_shape_errors() {
        let mut w = FrozenWeights::random(16, 3, 3, 1);
        assert!(w.validate().is_ok());
        assert_eq!(w.output_width(), 14);
        w.conv_filter = vec![1.0, 2.0];
        assert!(w.validate().is_err());
        let mut w = FrozenWeights::random(16, 3, 3, 1);
        w.dense2.pop();
        assert!(w.validate().is_err());
    }
}
