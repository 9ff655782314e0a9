//! Differential privacy: per-example gradient clipping, Gaussian noise,
//! and a Renyi-DP accountant for the Poisson-subsampled Gaussian
//! mechanism.

use crate::model::Gradients;
use crate::{NnError, Result};

/// Knobs for DP-SGD.
#[derive(Clone, Debug)]
pub struct DpConfig {
    /// Per-example l2 clipping norm C.
    pub clip_norm: f64,
    /// Noise multiplier: Gaussian std is `noise_multiplier * clip_norm`
    /// on the summed gradient.
    pub noise_multiplier: f64,
    /// Target delta; defaults to 1/|dataset| when unset.
    pub delta: Option<f64>,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            clip_norm: 0.75,
            noise_multiplier: 1.0,
            delta: None,
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip_norm <= 0.0 {
            return Err(NnError::Config("clip norm must be positive".into()));
        }
        if self.noise_multiplier < 0.0 {
            return Err(NnError::Config("noise multiplier must be >= 0".into()));
        }
        if let Some(d) = self.delta {
            if !(0.0..1.0).contains(&d) || d == 0.0 {
                return Err(NnError::Config("delta must be in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

/// Privacy loss of a finished training run.
#[derive(Clone, Debug, PartialEq)]
pub struct PrivacyReport {
    /// Epsilon; infinity when no noise was added.
    pub epsilon: f64,
    pub delta: f64,
    pub steps: u64,
    pub sampling_rate: f64,
    /// The Renyi order the conversion minimized at (None for the
    /// infinite-epsilon sentinel).
    pub alpha: Option<f64>,
}

/// l2 norm over a gradient set.
pub fn gradient_norm(grads: &Gradients) -> f64 {
    let mut sum = 0.0;
    for g in grads {
        g.for_each(|v| sum += v * v);
    }
    sum.sqrt()
}

/// Scale the gradient down to norm <= clip (exact no-op when under).
pub fn clip_in_place(grads: &mut Gradients, clip: f64) {
    let norm = gradient_norm(grads);
    if norm > clip {
        let s = clip / norm;
        for g in grads.iter_mut() {
            g.scale_in_place(s);
        }
    }
}

/// Renyi orders the accountant scans.
pub const ALPHA_GRID: std::ops::RangeInclusive<u32> = 2..=64;

/// ln(k!) for k <= 64, by direct summation.
fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

fn ln_choose(n: u32, k: u32) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Renyi divergence bound of one Poisson-subsampled Gaussian step at
/// integer order alpha: the binomial-expansion bound
/// (1/(alpha-1)) * ln( sum_k C(alpha,k) (1-q)^(alpha-k) q^k
///                     exp(k(k-1)/(2 sigma^2)) ).
/// Without subsampling (q = 1) this collapses to alpha / (2 sigma^2).
pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, alpha: u32) -> f64 {
    assert!(alpha >= 2);
    assert!(sigma > 0.0);
    assert!((0.0..=1.0).contains(&q));
    if q == 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return alpha as f64 / (2.0 * sigma * sigma);
    }
    let mut terms = Vec::with_capacity(alpha as usize + 1);
    for k in 0..=alpha {
        let t = ln_choose(alpha, k)
            + (alpha - k) as f64 * (1.0 - q).ln()
            + k as f64 * q.ln()
            + (k as f64 * (k as f64 - 1.0)) / (2.0 * sigma * sigma);
        terms.push(t);
    }
    log_sum_exp(&terms) / (alpha as f64 - 1.0)
}

/// Compose the per-step bound over `steps` and convert to (epsilon,
/// delta): epsilon = min_alpha [ steps * rdp(alpha) + ln(1/delta) /
/// (alpha - 1) ] over the integer grid.
pub fn account_epsilon(
    cfg: &DpConfig,
    sampling_rate: f64,
    steps: u64,
    delta: f64,
) -> PrivacyReport {
    if cfg.noise_multiplier == 0.0 {
        return PrivacyReport {
            epsilon: f64::INFINITY,
            delta,
            steps,
            sampling_rate,
            alpha: None,
        };
    }
    let q = sampling_rate.clamp(0.0, 1.0);
    let mut best = f64::INFINITY;
    let mut best_alpha = None;
    for alpha in ALPHA_GRID {
        let rdp = rdp_subsampled_gaussian(q, cfg.noise_multiplier, alpha);
        let eps = steps as f64 * rdp + (1.0 / delta).ln() / (alpha as f64 - 1.0);
        if eps < best {
            best = eps;
            best_alpha = Some(alpha as f64);
        }
    }
    PrivacyReport {
        epsilon: best.max(0.0),
        delta,
        steps,
        sampling_rate: q,
        alpha: best_alpha,
    }
}
