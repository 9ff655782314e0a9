//! Training loops: plain momentum SGD and per-example DP-SGD, with a
//! validation split, early stopping, and full seed determinism.
//!
//! Per-example gradients are always computed one sample at a time and
//! reduced in a fixed order, so the DP path with zero noise and a clip
//! bound that never binds is bit-identical to the plain path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::Dataset;
use crate::dp::{account_epsilon, clip_in_place, DpConfig, PrivacyReport};
use crate::model::{backward, bce_loss, forward, Gradients, Mode};
use crate::spec::{ModelSpec, RELU_CUBIC_TRUSTED_RANGE};
use crate::state::{LayerParams, ModelState};
use crate::{NnError, Result};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Fraction held out for validation-based early stopping.
    pub val_fraction: f64,
    /// Stop after this many consecutive non-improving epochs.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 3,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            val_fraction: 0.1,
            patience: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(NnError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(NnError::Config("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(NnError::Config(
                "validation fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of a training run.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    /// Mean training loss after each epoch (inference mode).
    pub epoch_train_losses: Vec<f64>,
    pub final_train_loss: f64,
    pub privacy: Option<PrivacyReport>,
    /// Widest pre-activation range the cubic activation saw; outside the
    /// trusted range the approximation diverges from ReLU.
    pub cubic_range: Option<(f64, f64)>,
    pub cubic_range_warning: bool,
}

/// One momentum-SGD update: velocity = momentum * velocity + grad;
/// theta -= lr * velocity.
pub fn sgd_step(
    state: &mut ModelState,
    grads: &Gradients,
    velocity: &mut Gradients,
    lr: f64,
    momentum: f64,
) {
    for ((p, g), v) in state.params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        v.zip_apply(g, |vi, gi| *vi = momentum * *vi + gi);
        p.zip_apply(v, |pi, vi| *pi -= lr * vi);
    }
}

/// One DP-SGD update from materialized per-example gradients: clip each
/// to the l2 bound, sum, perturb the sum with Gaussian noise of std
/// noise_multiplier * clip_norm, average, and take a momentum-SGD step.
/// With zero noise and an unbinding clip bound this is bit-identical to
/// [`sgd_step`] on the averaged gradient.
pub fn dpsgd_step(
    state: &mut ModelState,
    per_example_grads: &mut [Gradients],
    cfg: &DpConfig,
    velocity: &mut Gradients,
    lr: f64,
    momentum: f64,
    rng: &mut ChaCha20Rng,
) -> Result<()> {
    cfg.validate()?;
    if per_example_grads.is_empty() {
        return Err(NnError::Config(
            "DP step needs at least one gradient".into(),
        ));
    }
    let mut sum: Gradients = state.params.iter().map(|p| p.zeros_like()).collect();
    for g in per_example_grads.iter_mut() {
        clip_in_place(g, cfg.clip_norm);
        for (acc, gi) in sum.iter_mut().zip(g.iter()) {
            acc.zip_apply(gi, |a, v| *a += v);
        }
    }
    if cfg.noise_multiplier > 0.0 {
        let std = cfg.noise_multiplier * cfg.clip_norm;
        for acc in sum.iter_mut() {
            add_gaussian_noise(acc, std, rng);
        }
    }
    let inv = 1.0 / per_example_grads.len() as f64;
    for acc in sum.iter_mut() {
        acc.scale_in_place(inv);
    }
    sgd_step(state, &sum, velocity, lr, momentum);
    Ok(())
}

fn accuracy(state: &ModelState, data: &Dataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for &i in idx {
        let (class, _) = predict(state, &data.features[i])?;
        if class == data.labels[i] as usize {
            hits += 1;
        }
    }
    Ok(hits as f64 / idx.len() as f64)
}

fn mean_loss(state: &ModelState, data: &Dataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let mut total = 0.0;
    for &i in idx {
        let cache = forward(state, &data.features[i], Mode::Infer, &mut rng)?;
        total += bce_loss(&cache.output, data.labels[i]);
    }
    Ok(total / idx.len() as f64)
}

fn validate_dataset(data: &Dataset, expected_width: usize) -> Result<()> {
    if data.is_empty() {
        return Err(NnError::Config("dataset is empty".into()));
    }
    if data.width() != expected_width {
        return Err(NnError::Shape(format!(
            "feature width {} != expected {expected_width}",
            data.width()
        )));
    }
    if data.features.iter().any(|f| f.len() != data.width()) {
        return Err(NnError::Shape("ragged feature rows".into()));
    }
    let (zeros, ones) = data.class_counts();
    if zeros == 0 || ones == 0 {
        return Err(NnError::ClassBalance(format!(
            "both classes required, got {zeros}/{ones}"
        )));
    }
    Ok(())
}

/// Train `spec` on `data`. With a [`DpConfig`], per-example gradients are
/// clipped and the summed gradient perturbed before the step; the report
/// then carries the accounted privacy loss.
pub fn train(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    dp: Option<&DpConfig>,
) -> Result<(ModelState, TrainReport)> {
    cfg.validate()?;
    if let Some(d) = dp {
        d.validate()?;
    }
    validate_dataset(data, spec.input_width)?;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let n = data.len();

    // Deterministic shuffle, then split off the validation tail.
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, &mut rng);
    let val_count = ((n as f64) * cfg.val_fraction) as usize;
    let val_count = if n >= 2 {
        val_count.max(usize::from(cfg.val_fraction > 0.0))
    } else {
        0
    };
    let (train_idx, val_idx) = order.split_at(n - val_count);
    let mut train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    let mut state = ModelState::init(spec, cfg.seed)?;
    let mut velocity: Gradients = state.params.iter().map(|p| p.zeros_like()).collect();
    let mut example_grad: Gradients = velocity.clone();
    let mut batch_grad: Gradients = velocity.clone();

    let mut best: Option<(f64, ModelState, usize)> = None;
    let mut bad_epochs = 0usize;
    let mut steps = 0u64;
    let mut epochs_run = 0usize;
    let mut cubic_range: Option<(f64, f64)> = None;
    let mut epoch_train_losses = Vec::with_capacity(cfg.epochs);

    'epochs: for epoch in 0..cfg.epochs {
        shuffle(&mut train_idx, &mut rng);
        for chunk in train_idx.chunks(cfg.batch_size) {
            for g in batch_grad.iter_mut() {
                match g {
                    LayerParams::Conv { w, b } => {
                        w.iter_mut().for_each(|x| *x = 0.0);
                        *b = 0.0;
                    }
                    LayerParams::Dense { w, b } => {
                        w.iter_mut().flatten().for_each(|x| *x = 0.0);
                        b.iter_mut().for_each(|x| *x = 0.0);
                    }
                    LayerParams::None => {}
                }
            }
            for &i in chunk {
                let cache = forward(&state, &data.features[i], Mode::Train, &mut rng)?;
                if let Some((lo, hi)) = cache.cubic_range {
                    cubic_range = Some(match cubic_range {
                        None => (lo, hi),
                        Some((a, b)) => (a.min(lo), b.max(hi)),
                    });
                }
                backward(&state, &cache, data.labels[i], &mut example_grad)?;
                if let Some(d) = dp {
                    clip_in_place(&mut example_grad, d.clip_norm);
                }
                for (acc, g) in batch_grad.iter_mut().zip(&example_grad) {
                    acc.zip_apply(g, |a, gi| *a += gi);
                }
            }
            if let Some(d) = dp {
                if d.noise_multiplier > 0.0 {
                    let std = d.noise_multiplier * d.clip_norm;
                    for acc in batch_grad.iter_mut() {
                        add_gaussian_noise(acc, std, &mut rng);
                    }
                }
            }
            let inv = 1.0 / chunk.len() as f64;
            for acc in batch_grad.iter_mut() {
                acc.scale_in_place(inv);
            }
            sgd_step(
                &mut state,
                &batch_grad,
                &mut velocity,
                cfg.learning_rate,
                cfg.momentum,
            );
            steps += 1;
        }
        epochs_run = epoch + 1;
        state.epochs_trained = epochs_run;
        epoch_train_losses.push(mean_loss(&state, data, &train_idx)?);

        if !val_idx.is_empty() {
            let val_loss = mean_loss(&state, data, &val_idx)?;
            let improved = best.as_ref().map_or(true, |(b, _, _)| val_loss < *b);
            if improved {
                best = Some((val_loss, state.clone(), epochs_run));
                bad_epochs = 0;
            } else {
                bad_epochs += 1;
                if bad_epochs >= cfg.patience {
                    break 'epochs;
                }
            }
        }
    }

    // Keep the best validation state when early stopping was active.
    if let Some((_, best_state, _)) = best {
        state = best_state;
    }

    let train_accuracy = accuracy(&state, data, &train_idx)?;
    let val_accuracy = if val_idx.is_empty() {
        None
    } else {
        Some(accuracy(&state, data, &val_idx)?)
    };
    let final_train_loss = mean_loss(&state, data, &train_idx)?;

    let privacy = dp.map(|d| {
        let delta = d.delta.unwrap_or(1.0 / n as f64);
        let q = (cfg.batch_size as f64 / train_idx.len().max(1) as f64).min(1.0);
        account_epsilon(d, q, steps, delta)
    });

    let warn = cubic_range
        .is_some_and(|(lo, hi)| lo < RELU_CUBIC_TRUSTED_RANGE.0 || hi > RELU_CUBIC_TRUSTED_RANGE.1);
    Ok((
        state,
        TrainReport {
            epochs_run,
            train_accuracy,
            val_accuracy,
            epoch_train_losses,
            final_train_loss,
            privacy,
            cubic_range,
            cubic_range_warning: warn,
        },
    ))
}

/// Train the server architecture on source-domain data.
pub fn train_source(
    data: &Dataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    dp: Option<&DpConfig>,
) -> Result<(ModelState, TrainReport)> {
    if spec.frozen_boundary.is_none() {
        return Err(NnError::Config(
            "server spec must carry a frozen boundary".into(),
        ));
    }
    train(spec, data, cfg, dp)
}

/// Train the client stack on decrypted frozen-layer features. Never
/// touches encryption.
pub fn finetune_client(
    features: &Dataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<(ModelState, TrainReport)> {
    train(spec, features, cfg, None)
}

/// Class decision: argmax over the two sigmoid units, ties resolved to
/// class 0; the score is the winning unit's value.
pub fn predict(state: &ModelState, features: &[f64]) -> Result<(usize, f64)> {
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let out = forward(state, features, Mode::Infer, &mut rng)?.output;
    let class = usize::from(out[1] > out[0]);
    Ok((class, out[class]))
}

fn shuffle(idx: &mut [usize], rng: &mut ChaCha20Rng) {
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
}

fn add_gaussian_noise(p: &mut LayerParams, std: f64, rng: &mut ChaCha20Rng) {
    let mut sample = |x: &mut f64| {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        *x += std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    };
    match p {
        LayerParams::Conv { w, b } => {
            w.iter_mut().for_each(&mut sample);
            sample(b);
        }
        LayerParams::Dense { w, b } => {
            w.iter_mut().flatten().for_each(&mut sample);
            b.iter_mut().for_each(&mut sample);
        }
        LayerParams::None => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::separable_fixture;

    fn small_spec() -> ModelSpec {
        ModelSpec::server(16, 3, 3)
    }

    #[test]
    fn separable_data_trains_to_high_accuracy() {
        let data = separable_fixture(16, 200, 1);
        let cfg = TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        };
        let (_, report) = train_source(&data, &small_spec(), &cfg, None).unwrap();
        assert!(
            report.train_accuracy >= 0.95,
            "accuracy {}",
            report.train_accuracy
        );
    }

    #[test]
    fn training_is_reproducible() {
        let data = separable_fixture(16, 80, 2);
        let cfg = TrainConfig {
            seed: 5,
            epochs: 2,
            ..TrainConfig::default()
        };
        let (s1, _) = train(&small_spec(), &data, &cfg, None).unwrap();
        let (s2, _) = train(&small_spec(), &data, &cfg, None).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn dp_with_zero_noise_and_unbounded_clip_matches_plain_bitwise() {
        let data = separable_fixture(16, 60, 3);
        let cfg = TrainConfig {
            seed: 7,
            epochs: 2,
            ..TrainConfig::default()
        };
        let dp = DpConfig {
            clip_norm: f64::INFINITY,
            noise_multiplier: 0.0,
            delta: Some(1e-3),
        };
        let (plain, _) = train(&small_spec(), &data, &cfg, None).unwrap();
        let (dp_state, report) = train(&small_spec(), &data, &cfg, Some(&dp)).unwrap();
        assert_eq!(plain, dp_state);
        assert!(report.privacy.unwrap().epsilon.is_infinite());
    }

    #[test]
    fn degenerate_datasets_are_rejected() {
        let spec = small_spec();
        let cfg = TrainConfig::default();
        let empty = Dataset::new(vec![], vec![]);
        assert!(matches!(
            train(&spec, &empty, &cfg, None),
            Err(NnError::Config(_))
        ));
        let single_class = Dataset::new(vec![vec![0.0; 16]; 4], vec![1, 1, 1, 1]);
        assert!(matches!(
            train(&spec, &single_class, &cfg, None),
            Err(NnError::ClassBalance(_))
        ));
        let wrong_width = Dataset::new(vec![vec![0.0; 8]; 2], vec![0, 1]);
        assert!(matches!(
            train(&spec, &wrong_width, &cfg, None),
            Err(NnError::Shape(_))
        ));
    }

    #[test]
    fn sgd_step_definitions() {
        let spec = ModelSpec {
            input_width: 2,
            layers: vec![crate::spec::LayerSpec::Dense {
                units: 2,
                activation: crate::spec::Activation::Sigmoid,
            }],
            frozen_boundary: None,
        };
        let mut state = ModelState::init(&spec, 1).unwrap();
        let before = state.clone();
        let grads: Gradients = vec![LayerParams::Dense {
            w: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            b: vec![0.5, -0.5],
        }];
        let mut vel: Gradients = state.params.iter().map(|p| p.zeros_like()).collect();

        // lr = 0: untouched.
        sgd_step(&mut state, &grads, &mut vel, 0.0, 0.9);
        assert_eq!(state.params, before.params);

        // momentum 0, one step: theta - lr * grad.
        let mut vel: Gradients = state.params.iter().map(|p| p.zeros_like()).collect();
        sgd_step(&mut state, &grads, &mut vel, 0.1, 0.0);
        match (&state.params[0], &before.params[0]) {
            (LayerParams::Dense { w, .. }, LayerParams::Dense { w: w0, .. }) => {
                assert!((w[0][0] - (w0[0][0] - 0.1)).abs() < 1e-12);
                assert!((w[1][1] - (w0[1][1] - 0.4)).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn predict_tie_breaks_to_class_zero() {
        let spec = ModelSpec {
            input_width: 2,
            layers: vec![crate::spec::LayerSpec::Dense {
                units: 2,
                activation: crate::spec::Activation::Sigmoid,
            }],
            frozen_boundary: None,
        };
        let mut state = ModelState::init(&spec, 1).unwrap();
        for p in &mut state.params {
            p.scale_in_place(0.0);
        }
        let (class, score) = predict(&state, &[1.0, -1.0]).unwrap();
        assert_eq!(class, 0);
        assert!((score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hand_set_weights_follow_feature_sign() {
        let spec = ModelSpec {
            input_width: 2,
            layers: vec![crate::spec::LayerSpec::Dense {
                units: 2,
                activation: crate::spec::Activation::Sigmoid,
            }],
            frozen_boundary: None,
        };
        let mut state = ModelState::init(&spec, 1).unwrap();
        state.params[0] = LayerParams::Dense {
            w: vec![vec![-5.0, 0.0], vec![5.0, 0.0]],
            b: vec![0.0, 0.0],
        };
        assert_eq!(predict(&state, &[1.0, 0.3]).unwrap().0, 1);
        assert_eq!(predict(&state, &[-1.0, 0.3]).unwrap().0, 0);
    }

    #[test]
    fn dpsgd_noise_statistics_match_sigma_c_over_batch() {
        // A single-parameter linear model with zero gradients isolates
        // the injected noise: each step moves the weight by exactly
        // -lr * noise / batch, so over many steps the sample std must be
        // lr * sigma * C / batch.
        let spec = ModelSpec {
            input_width: 1,
            layers: vec![crate::spec::LayerSpec::Dense {
                units: 1,
                activation: crate::spec::Activation::Linear,
            }],
            frozen_boundary: None,
        };
        let base = ModelState::init(&spec, 0).unwrap();
        let cfg = DpConfig {
            clip_norm: 0.75,
            noise_multiplier: 1.3,
            delta: Some(1e-3),
        };
        let batch = 4usize;
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let mut deltas = Vec::with_capacity(10_000);
        for _ in 0..10_000 {
            let mut state = base.clone();
            let mut velocity: Gradients = state.params.iter().map(|p| p.zeros_like()).collect();
            let mut grads: Vec<Gradients> = (0..batch)
                .map(|_| state.params.iter().map(|p| p.zeros_like()).collect())
                .collect();
            dpsgd_step(
                &mut state,
                &mut grads,
                &cfg,
                &mut velocity,
                1.0,
                0.0,
                &mut rng,
            )
            .unwrap();
            let (before, after) = match (&base.params[0], &state.params[0]) {
                (LayerParams::Dense { w: w0, .. }, LayerParams::Dense { w: w1, .. }) => {
                    (w0[0][0], w1[0][0])
                }
                _ => unreachable!(),
            };
            deltas.push(after - before);
        }
        let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / deltas.len() as f64;
        let expect = cfg.noise_multiplier * cfg.clip_norm / batch as f64;
        let ratio = var.sqrt() / expect;
        assert!(
            (ratio - 1.0).abs() < 0.05,
            "noise std off by {:.1}%",
            (ratio - 1.0) * 100.0
        );
    }

    #[test]
    fn dpsgd_step_reduces_to_sgd_without_noise_or_clipping() {
        let spec = small_spec();
        let base = ModelState::init(&spec, 44).unwrap();
        let grads: Gradients = {
            let mut g: Gradients = base.params.iter().map(|p| p.zeros_like()).collect();
            for p in g.iter_mut() {
                p.zip_apply(&p.clone(), |x, _| *x = 0.01);
            }
            g
        };
        let cfg = DpConfig {
            clip_norm: f64::INFINITY,
            noise_multiplier: 0.0,
            delta: Some(1e-3),
        };
        let mut plain = base.clone();
        let mut v1: Gradients = plain.params.iter().map(|p| p.zeros_like()).collect();
        sgd_step(&mut plain, &grads, &mut v1, 0.1, 0.9);

        let mut dp = base.clone();
        let mut v2: Gradients = dp.params.iter().map(|p| p.zeros_like()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut per_example = vec![grads.clone()];
        dpsgd_step(&mut dp, &mut per_example, &cfg, &mut v2, 0.1, 0.9, &mut rng).unwrap();
        assert_eq!(plain, dp);
    }

    #[test]
    fn noisy_training_still_runs_and_reports_epsilon() {
        let data = separable_fixture(16, 60, 9);
        let cfg = TrainConfig {
            seed: 11,
            epochs: 1,
            ..TrainConfig::default()
        };
        let dp = DpConfig {
            clip_norm: 0.75,
            noise_multiplier: 1.0,
            delta: None,
        };
        let (_, report) = train(&small_spec(), &data, &cfg, Some(&dp)).unwrap();
        let p = report.privacy.unwrap();
        assert!(p.epsilon.is_finite() && p.epsilon > 0.0);
        assert_eq!(p.delta, 1.0 / 60.0);
    }
}
