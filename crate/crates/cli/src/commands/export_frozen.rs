use crate::args::ExportFrozenArgs;
use crate::weights_io::{frozen_from_server, load_server_model, save_frozen};
use crate::CliResult;

pub fn run(args: ExportFrozenArgs) -> CliResult {
    let (state, conv_filter, pool) = load_server_model(&args.weights)?;
    let frozen = frozen_from_server(&state, conv_filter, pool)?;
    save_frozen(&args.out, &frozen)?;
    println!("frozen={}", args.out.display());
    println!("item_width={}", frozen.item_width());
    println!("output_width={}", frozen.output_width());
    Ok(())
}
