use std::net::TcpStream;
use std::time::Instant;

use cryptotl_nn::{data, predict};
use cryptotl_protocol::{client_query, ClientContext, OfflineClientIo, ProtocolError, StreamIo};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::args::PredictArgs;
use crate::errors::CliError;
use crate::keyfiles::load_key_dir;
use crate::weights_io::load_client_model;
use crate::{env_max_frame, CliResult};

pub fn run(args: PredictArgs) -> CliResult {
    if args.server.is_some() == args.offline_dir.is_some() {
        return Err(CliError::Usage(
            "pass exactly one of --server or --offline-dir".into(),
        ));
    }
    let keys = load_key_dir(&args.keys)?;
    let inputs = data::load_csv(&args.input, Some(keys.meta.item_width))?;
    let client_state = load_client_model(&args.client_weights)?;
    let feature_width = keys.meta.item_width - keys.meta.pool + 1;
    if client_state.spec.input_width != feature_width {
        return Err(CliError::Data(format!(
            "client model expects width {}, frozen features have {feature_width}",
            client_state.spec.input_width
        )));
    }

    let cx = ClientContext {
        params: keys.params.clone(),
        plan: keys.plan.clone(),
        sk: keys.sk,
        pk: keys.pk,
        relin: keys.relin,
        galois: keys.galois,
        feature_width,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(args.seed ^ 0x9ded);

    let query_start = Instant::now();
    let features = match (&args.server, &args.offline_dir) {
        (Some(addr), None) => {
            let stream = TcpStream::connect(addr)
                .map_err(|e| CliError::Protocol(format!("connect {addr}: {e}")))?;
            let mut io = StreamIo::new(stream, env_max_frame());
            client_query(&mut io, &inputs.features, &cx, &mut rng)?
        }
        (None, Some(dir)) => {
            let mut io = OfflineClientIo::new(dir, env_max_frame())?;
            match client_query(&mut io, &inputs.features, &cx, &mut rng) {
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
    let t_s = query_start.elapsed().as_secs_f64();

    let client_start = Instant::now();
    let mut results = Vec::with_capacity(features.len());
    for f in &features {
        results.push(predict(&client_state, f)?);
    }
    let t_c = client_start.elapsed().as_secs_f64();

    for (i, (class, score)) in results.iter().enumerate() {
        println!("input={i} class={class} score={score:.4}");
    }
    let n_queries = inputs.features.len().div_ceil(cx.plan.p_impl);
    println!("queries_issued={n_queries}");
    println!("t_s_s={t_s:.3}");
    println!("t_c_s={t_c:.3}");
    Ok(())
}
