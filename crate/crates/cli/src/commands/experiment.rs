//! The synthetic transfer-learning sweep: frozen-feature fine-tuning
//! against from-scratch training at shrinking target fractions, entirely
//! in plaintext (the encrypted path computes the same features within
//! noise; equivalence is covered by the acceptance suite).

use std::io::Write;

use cryptotl_nn::synth::{make_source_target, SynthConfig};
use cryptotl_nn::{
    finetune_client, forward_prefix, predict, train, train_source, Dataset, ModelSpec, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::args::ExperimentArgs;
use crate::errors::CliError;
use crate::CliResult;

pub fn run(args: ExperimentArgs) -> CliResult {
    if args.scenario != "tl-curve" {
        return Err(CliError::Usage(format!(
            "unknown scenario {:?} (only tl-curve exists)",
            args.scenario
        )));
    }
    if args.fractions.is_empty() || args.fractions.iter().any(|&f| !(f > 0.0 && f <= 100.0)) {
        return Err(CliError::Usage("fractions must lie in (0, 100]".into()));
    }
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }

    let results = run_sweep(&args)?;

    // Aggregate CSV: one row per (fraction, method).
    let mut agg = String::from("fraction,method,accuracy_mean,accuracy_std\n");
    for frac in &args.fractions {
        for method in ["cryptotl", "scratch"] {
            let accs: Vec<f64> = results
                .iter()
                .filter(|r| r.fraction == *frac && r.method == method)
                .map(|r| r.accuracy)
                .collect();
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64;
            agg.push_str(&format!("{frac},{method},{mean:.4},{:.4}\n", var.sqrt()));
        }
    }
    std::fs::File::create(&args.out)?.write_all(agg.as_bytes())?;

    // Per-seed CSV next to it.
    let per_seed_path = format!("{}.per_seed.csv", args.out.display());
    let mut per = String::from("fraction,method,seed,accuracy\n");
    for r in &results {
        per.push_str(&format!(
            "{},{},{},{:.4}\n",
            r.fraction, r.method, r.seed, r.accuracy
        ));
    }
    std::fs::File::create(&per_seed_path)?.write_all(per.as_bytes())?;

    print!("{agg}");
    println!("out={}", args.out.display());
    println!("per_seed={per_seed_path}");
    Ok(())
}

pub struct SweepRow {
    pub fraction: f64,
    pub method: &'static str,
    pub seed: u64,
    pub accuracy: f64,
}

pub fn run_sweep(args: &ExperimentArgs) -> Result<Vec<SweepRow>, CliError> {
    let synth = SynthConfig {
        dim: args.dim,
        ..SynthConfig::default()
    };
    let (source, target_train, target_test) = make_source_target(
        &synth,
        args.source_size,
        args.target_size,
        args.test_size,
        args.seed,
    );

    // Source training happens once; the sweep varies the client side.
    let server_spec = ModelSpec::server(args.dim, 9, 3);
    let cfg = TrainConfig {
        epochs: args.epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };
    eprintln!("training source model on {} samples ...", source.len());
    let (server_state, _) = train_source(&source, &server_spec, &cfg, None)?;

    let boundary = server_spec.frozen_boundary.expect("server spec");
    let extract = |data: &Dataset| -> Result<Vec<Vec<f64>>, CliError> {
        data.features
            .iter()
            .map(|x| forward_prefix(&server_state, x, boundary).map_err(CliError::from))
            .collect()
    };
    eprintln!("extracting frozen features ...");
    let train_features = extract(&target_train)?;
    let test_features = extract(&target_test)?;

    let feature_width = train_features[0].len();
    let client_spec = ModelSpec::client(feature_width, 3);

    let mut rows = Vec::new();
    for &fraction in &args.fractions {
        for seed in 0..args.seeds {
            let run_seed = args.seed ^ (seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
            let idx = stratified_subsample(&target_train, fraction / 100.0, run_seed);
            let run_cfg = TrainConfig {
                epochs: args.epochs,
                seed: run_seed,
                ..TrainConfig::default()
            };

            // Transfer path: fine-tune the client stack on frozen
            // features of the subsample.
            let tune_set = Dataset::new(
                idx.iter().map(|&i| train_features[i].clone()).collect(),
                idx.iter().map(|&i| target_train.labels[i]).collect(),
            );
            let (client_state, _) = finetune_client(&tune_set, &client_spec, &run_cfg)?;
            let tl_acc = accuracy_on(&client_state, &test_features, &target_test.labels)?;
            rows.push(SweepRow {
                fraction,
                method: "cryptotl",
                seed,
                accuracy: tl_acc,
            });

            // From-scratch path: the full architecture on the raw
            // subsample.
            let scratch_set = target_train.subset(&idx);
            let (scratch_state, _) = train(&server_spec, &scratch_set, &run_cfg, None)?;
            let scratch_acc =
                accuracy_on(&scratch_state, &target_test.features, &target_test.labels)?;
            rows.push(SweepRow {
                fraction,
                method: "scratch",
                seed,
                accuracy: scratch_acc,
            });
            eprintln!(
                "fraction={fraction} seed={seed} n={} cryptotl={tl_acc:.3} scratch={scratch_acc:.3}",
                idx.len()
            );
        }
    }
    Ok(rows)
}

fn accuracy_on(
    state: &cryptotl_nn::ModelState,
    features: &[Vec<f64>],
    labels: &[u8],
) -> Result<f64, CliError> {
    let mut hits = 0usize;
    for (f, &l) in features.iter().zip(labels) {
        if predict(state, f)?.0 == l as usize {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

/// Class-balanced subsample of ceil(n * frac) indices, at least one per
/// class, deterministic in the seed.
fn stratified_subsample(data: &Dataset, frac: f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in data.labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut picked = Vec::new();
    for class in &mut by_class {
        for i in (1..class.len()).rev() {
            let j = rng.gen_range(0..=i);
            class.swap(i, j);
        }
        let want = ((class.len() as f64 * frac).ceil() as usize).clamp(1, class.len());
        picked.extend_from_slice(&class[..want]);
    }
    picked.sort_unstable();
    picked
}
