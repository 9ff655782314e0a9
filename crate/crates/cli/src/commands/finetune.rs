use std::net::TcpStream;
use std::path::PathBuf;
use std::time::Instant;

use cryptotl_nn::{data, finetune_client, Dataset, ModelSpec, TrainConfig};
use cryptotl_protocol::{client_query, ClientContext, OfflineClientIo, ProtocolError, StreamIo};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::args::FinetuneArgs;
use crate::errors::CliError;
use crate::keyfiles::load_key_dir;
use crate::weights_io::save_client_model;
use crate::{env_max_frame, CliResult};

pub fn run(args: FinetuneArgs) -> CliResult {
    if args.server.is_some() == args.offline_dir.is_some() {
        return Err(CliError::Usage(
            "pass exactly one of --server or --offline-dir".into(),
        ));
    }
    let keys = load_key_dir(&args.keys)?;
    let dataset = data::load_csv(&args.data, Some(keys.meta.item_width))?;
    let feature_width = keys.meta.item_width - keys.meta.pool + 1;
    let cache_path = args
        .cache
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.features.csv", args.out.display())));

    let query_start = Instant::now();
    let (features, fresh_queries) = match load_feature_cache(&cache_path, &dataset, feature_width) {
        Some(cached) => {
            println!("feature_cache=hit queries=0");
            (cached, 0usize)
        }
        None => {
            let cx = ClientContext {
                params: keys.params.clone(),
                plan: keys.plan.clone(),
                sk: keys.sk,
                pk: keys.pk,
                relin: keys.relin,
                galois: keys.galois,
                feature_width,
            };
            let mut rng = ChaCha20Rng::seed_from_u64(args.seed ^ 0x51e5);
            let feats = match (&args.server, &args.offline_dir) {
                (Some(addr), None) => {
                    let stream = TcpStream::connect(addr)
                        .map_err(|e| CliError::Protocol(format!("connect {addr}: {e}")))?;
                    let mut io = StreamIo::new(stream, env_max_frame());
                    client_query(&mut io, &dataset.features, &cx, &mut rng)?
                }
                (None, Some(dir)) => {
                    let mut io = OfflineClientIo::new(dir, env_max_frame())?;
                    match client_query(&mut io, &dataset.features, &cx, &mut rng) {
                        Ok(f) => f,
                        Err(ProtocolError::Pending(what)) => {
                            eprintln!(
                                "queries written to {}; run `cryptotl serve --offline-dir {}` \
                                 and re-run this command ({what})",
                                dir.display(),
                                dir.display()
                            );
                            return Err(CliError::Protocol("offline responses pending".into()));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                _ => unreachable!("validated above"),
            };
            let n_queries = dataset.features.len().div_ceil(cx.plan.p_impl);
            let cache_data = Dataset::new(feats.clone(), dataset.labels.clone());
            data::save_csv(&cache_path, &cache_data, Some("decrypted frozen features"))?;
            println!("feature_cache=write queries={n_queries}");
            (feats, n_queries)
        }
    };
    let t_query = query_start.elapsed().as_secs_f64();

    let feature_set = Dataset::new(features, dataset.labels.clone());
    let spec = ModelSpec::client(feature_width, keys.meta.pool);
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        momentum: args.momentum,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let tune_start = Instant::now();
    let (state, report) = finetune_client(&feature_set, &spec, &cfg)?;
    let t_finetune = tune_start.elapsed().as_secs_f64();
    save_client_model(&args.out, &state, keys.meta.pool)?;

    println!("queries_issued={fresh_queries}");
    println!("t_query_s={t_query:.3}");
    println!("t_finetune_s={t_finetune:.3}");
    println!("train_accuracy={:.4}", report.train_accuracy);
    if let Some(v) = report.val_accuracy {
        println!("val_accuracy={v:.4}");
    }
    println!("client_weights={}", args.out.display());
    Ok(())
}

/// A cache is valid when row count and width match the dataset.
fn load_feature_cache(path: &PathBuf, dataset: &Dataset, width: usize) -> Option<Vec<Vec<f64>>> {
    if !path.exists() {
        return None;
    }
    let cached = data::load_csv(path, Some(width)).ok()?;
    if cached.len() != dataset.len() || cached.labels != dataset.labels {
        return None;
    }
    Some(cached.features)
}
