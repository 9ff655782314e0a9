use std::io::Write;
use std::time::Instant;

use cryptotl_he::ckks::{decode, decrypt, encode, encrypt, gen_galois_keys, keygen, CkksParams};
use cryptotl_he::layers::{
    enc_avgpool, enc_conv1d, enc_dense_bsgs, enc_relu_approx, oracle, pack_batch, plan_packing,
    plan_rotations, prepare_frozen_operands, replicate, unpack_batch, EvalKeys, FrozenWeights,
    OpCounter, OpCounts,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::args::BenchArgs;
use crate::errors::CliError;
use crate::CliResult;

struct StageCounts {
    name: &'static str,
    counts: OpCounts,
    wall_ms: f64,
}

pub fn run(args: BenchArgs) -> CliResult {
    let params = CkksParams::preset_by_name(&args.preset)
        .ok_or_else(|| CliError::Usage(format!("unknown preset {:?}", args.preset)))?;
    if args.repeat == 0 {
        return Err(CliError::Usage("--repeat must be at least 1".into()));
    }
    let plan = plan_packing(&params, args.item_width)?;
    let weights = FrozenWeights::random(args.item_width, args.conv_filter, args.pool, args.seed);

    eprintln!("preparing keys and operands ...");
    let (sk, pk, relin) = keygen(&params, args.seed)?;
    let steps: Vec<i32> = plan_rotations(&plan, args.conv_filter, args.pool)
        .into_iter()
        .collect();
    let galois = gen_galois_keys(&sk, &steps, args.seed + 1)?;
    let keys = EvalKeys { galois, relin };
    let operands = prepare_frozen_operands(&params, &plan, &weights)?;

    let mut rng = ChaCha20Rng::seed_from_u64(args.seed + 2);
    let items: Vec<Vec<f64>> = (0..plan.p_impl)
        .map(|_| {
            (0..args.item_width)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let slots = pack_batch(&items, &plan)?;
    let pt = encode(
        &params,
        &slots,
        params.max_level(),
        params.log2_scale() as f64,
    )?;
    let ct = encrypt(&pt, &pk, &mut rng)?;

    // One instrumented stage-by-stage pass for per-layer counts.
    let mut stages: Vec<StageCounts> = Vec::new();
    let stage = |name: &'static str,
                 counter: &OpCounter,
                 start: Instant,
                 prev: &mut OpCounts,
                 stages: &mut Vec<StageCounts>| {
        let snap = counter.snapshot();
        stages.push(StageCounts {
            name,
            counts: snap.since(prev),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        *prev = snap;
    };
    let counter = OpCounter::new();
    let mut prev = counter.snapshot();
    let t0 = Instant::now();
    let x = enc_conv1d(&ct, &operands.conv, &keys, &counter)?;
    stage("conv", &counter, t0, &mut prev, &mut stages);
    let t0 = Instant::now();
    let x = replicate(&x, &plan, &keys, &counter)?;
    stage("replicate1", &counter, t0, &mut prev, &mut stages);
    let t0 = Instant::now();
    let x = enc_dense_bsgs(&x, &operands.dense1, &plan, &keys, &counter)?;
    stage("dense1", &counter, t0, &mut prev, &mut stages);
    let t0 = Instant::now();
    let x = enc_relu_approx(&x, &operands.relu, &keys, &counter)?;
    stage("activation", &counter, t0, &mut prev, &mut stages);
    let t0 = Instant::now();
    let x = enc_avgpool(&x, &operands.pool, &keys, &counter)?;
    stage("pool", &counter, t0, &mut prev, &mut stages);
    let t0 = Instant::now();
    let x = replicate(&x, &plan, &keys, &counter)?;
    stage("replicate2", &counter, t0, &mut prev, &mut stages);
    let t0 = Instant::now();
    let out = enc_dense_bsgs(&x, &operands.dense2, &plan, &keys, &counter)?;
    stage("dense2", &counter, t0, &mut prev, &mut stages);
    let levels_consumed = ct.level() - out.level();

    // Self-check: decrypted output against the unencrypted twin.
    let feature_width = weights.output_width();
    let got = unpack_batch(
        &decode(&decrypt(&out, &sk)?),
        &plan,
        feature_width,
        items.len(),
    );
    let expect = oracle::plaintext_frozen_forward(&items, &weights)?;
    let mut max_slot_err: f64 = 0.0;
    for (g, e) in got.iter().zip(&expect) {
        for (a, b) in g.iter().zip(e) {
            max_slot_err = max_slot_err.max((a - b).abs());
        }
    }

    // Timed end-to-end repetitions (single-threaded throughout).
    let mut times_ms = Vec::with_capacity(args.repeat);
    for _ in 0..args.repeat {
        let counter = OpCounter::new();
        let t0 = Instant::now();
        let _ = cryptotl_he::layers::frozen_forward(&ct, &operands, &keys, &counter)?;
        times_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mean = times_ms.iter().sum::<f64>() / times_ms.len() as f64;
    let min = times_ms.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut report = String::new();
    report.push_str(&format!("preset={}\n", args.preset));
    report.push_str(&format!("degree={}\n", params.degree()));
    report.push_str(&format!("item_width={}\n", args.item_width));
    report.push_str(&format!("p_impl={}\n", plan.p_impl));
    report.push_str(&format!("p_naive={}\n", plan.p_naive));
    report.push_str(&format!("repeat={}\n", args.repeat));
    report.push_str(&format!("levels_consumed={levels_consumed}\n"));
    report.push_str(&format!("forward_mean_ms={mean:.1}\n"));
    report.push_str(&format!("forward_min_ms={min:.1}\n"));
    report.push_str(&format!("forward_max_slot_err={max_slot_err:.3e}\n"));
    for s in &stages {
        report.push_str(&format!(
            "{}_plain_mults={} {}_ct_mults={} {}_rotations={} {}_wall_ms={:.1}\n",
            s.name,
            s.counts.plain_mults,
            s.name,
            s.counts.ct_mults,
            s.name,
            s.counts.rotations,
            s.name,
            s.wall_ms
        ));
    }
    print!("{report}");
    if let Some(path) = &args.out {
        let mut f = std::fs::File::create(path)?;
        f.write_all(report.as_bytes())?;
    }
    Ok(())
}
