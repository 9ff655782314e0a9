use cryptotl_he::ckks::{gen_galois_keys, keygen, CkksParams};
use cryptotl_he::layers::{plan_packing, plan_rotations};
use cryptotl_protocol::codec;

use crate::args::KeygenArgs;
use crate::errors::CliError;
use crate::keyfiles::{self, KeyMeta};
use crate::CliResult;

pub fn run(args: KeygenArgs) -> CliResult {
    let params = CkksParams::preset_by_name(&args.preset)
        .ok_or_else(|| CliError::Usage(format!("unknown preset {:?}", args.preset)))?;
    let plan = plan_packing(&params, args.item_width)?;
    let steps: Vec<i32> = plan_rotations(&plan, args.conv_filter, args.pool)
        .into_iter()
        .collect();

    std::fs::create_dir_all(&args.out_dir)?;
    for name in [
        "meta.txt",
        "secret.ctls",
        "public.ctlp",
        "relin.ctlr",
        "galois.ctlg",
    ] {
        let p = args.out_dir.join(name);
        if p.exists() && !args.force {
            return Err(CliError::Usage(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            )));
        }
    }

    let (sk, pk, relin) = keygen(&params, args.seed)?;
    let galois = gen_galois_keys(&sk, &steps, args.seed.wrapping_add(1))?;

    let meta = KeyMeta {
        preset: args.preset.clone(),
        item_width: args.item_width,
        conv_filter: args.conv_filter,
        pool: args.pool,
        seed: args.seed,
        insecure: params.is_insecure(),
        fingerprint_hex: params.fingerprint().to_hex(),
    };
    keyfiles::write_meta(&args.out_dir, &meta)?;
    keyfiles::write_secret(&args.out_dir, &sk, params.is_insecure())?;
    std::fs::write(
        args.out_dir.join("public.ctlp"),
        codec::serialize_public_key(&pk),
    )?;
    std::fs::write(
        args.out_dir.join("relin.ctlr"),
        codec::serialize_relin_key(&relin),
    )?;
    std::fs::write(
        args.out_dir.join("galois.ctlg"),
        codec::serialize_galois_keys(&galois),
    )?;

    println!("fingerprint={}", params.fingerprint().to_hex());
    println!("galois_steps={}", galois.len());
    println!(
        "security={}",
        if params.is_insecure() {
            "INSECURE"
        } else {
            "STANDARD-128"
        }
    );
    Ok(())
}
