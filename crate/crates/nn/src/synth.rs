//! Synthetic fixtures: a pair of related binary classification domains.
//!
//! The source domain is two Gaussian clusters at +-mu in high dimension.
//! The target domain applies a small random orthogonal map (a product of
//! Givens rotations) to the same clusters, preserving the "related but
//! shifted domain" structure transfer learning relies on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::Dataset;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub dim: usize,
    /// Distance between the class means.
    pub separation: f64,
    /// Isotropic noise std around each mean.
    pub noise_std: f64,
    /// Number of Givens rotations making up the source->target map.
    pub rotation_planes: usize,
    /// Rotation angle per plane (radians).
    pub rotation_angle: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: 768,
            separation: 2.4,
            noise_std: 1.0,
            rotation_planes: 64,
            rotation_angle: 0.15,
        }
    }
}

fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Unit direction for the class axis, deterministic in the seed.
fn class_axis(dim: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// The plane list and angle defining the target domain's orthogonal map.
fn rotation_planes(cfg: &SynthConfig, rng: &mut ChaCha20Rng) -> Vec<(usize, usize)> {
    (0..cfg.rotation_planes)
        .map(|_| {
            let i = rng.gen_range(0..cfg.dim);
            let mut j = rng.gen_range(0..cfg.dim);
            while j == i {
                j = rng.gen_range(0..cfg.dim);
            }
            (i, j)
        })
        .collect()
}

fn apply_rotation(x: &mut [f64], planes: &[(usize, usize)], angle: f64) {
    let (c, s) = (angle.cos(), angle.sin());
    for &(i, j) in planes {
        let (xi, xj) = (x[i], x[j]);
        x[i] = c * xi - s * xj;
        x[j] = s * xi + c * xj;
    }
}

fn sample_cluster(
    n: usize,
    axis: &[f64],
    cfg: &SynthConfig,
    planes: Option<&[(usize, usize)]>,
    rng: &mut ChaCha20Rng,
) -> Dataset {
    let half = cfg.separation / 2.0;
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..n {
        let label = (k % 2) as u8;
        let sign = if label == 0 { -1.0 } else { 1.0 };
        let mut x: Vec<f64> = axis
            .iter()
            .map(|&a| sign * half * a + cfg.noise_std * gaussian(rng))
            .collect();
        if let Some(p) = planes {
            apply_rotation(&mut x, p, cfg.rotation_angle);
        }
        features.push(x);
        labels.push(label);
    }
    Dataset { features, labels }
}

/// Source training set, target training set, and target test set, all
/// deterministic in (cfg, seed). The target sets share the rotated
/// domain.
pub fn make_source_target(
    cfg: &SynthConfig,
    n_source: usize,
    n_target: usize,
    n_test: usize,
    seed: u64,
) -> (Dataset, Dataset, Dataset) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let axis = class_axis(cfg.dim, &mut rng);
    let planes = rotation_planes(cfg, &mut rng);
    let source = sample_cluster(n_source, &axis, cfg, None, &mut rng);
    let target_train = sample_cluster(n_target, &axis, cfg, Some(&planes), &mut rng);
    let target_test = sample_cluster(n_test, &axis, cfg, Some(&planes), &mut rng);
    (source, target_train, target_test)
}

/// A small linearly separable fixture for smoke tests.
pub fn separable_fixture(dim: usize, n: usize, seed: u64) -> Dataset {
    let cfg = SynthConfig {
        dim,
        separation: 6.0,
        noise_std: 1.0,
        rotation_planes: 0,
        rotation_angle: 0.0,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let axis = class_axis(dim, &mut rng);
    sample_cluster(n, &axis, &cfg, None, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let cfg = SynthConfig {
            dim: 32,
            ..SynthConfig::default()
        };
        let (s1, t1, e1) = make_source_target(&cfg, 100, 80, 40, 7);
        let (s2, ..) = make_source_target(&cfg, 100, 80, 40, 7);
        assert_eq!(s1, s2);
        let (zeros, ones) = s1.class_counts();
        assert_eq!(zeros, 50);
        assert_eq!(ones, 50);
        assert_eq!(t1.len(), 80);
        assert_eq!(e1.len(), 40);
    }

    #[test]
    fn rotation_preserves_norms() {
        let cfg = SynthConfig {
            dim: 16,
            rotation_planes: 8,
            rotation_angle: 0.3,
            ..SynthConfig::default()
        };
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let planes = rotation_planes(&cfg, &mut rng);
        let x: Vec<f64> = (0..16).map(|i| i as f64 / 4.0).collect();
        let mut y = x.clone();
        apply_rotation(&mut y, &planes, cfg.rotation_angle);
        let nx = x.iter().map(|v| v * v).sum::<f64>();
        let ny = y.iter().map(|v| v * v).sum::<f64>();
        assert!((nx - ny).abs() < 1e-9, "orthogonal maps preserve norms");
        assert_ne!(x, y);
    }
}
