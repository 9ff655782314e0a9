use cryptotl_nn::{data, train_source, DpConfig, ModelSpec, TrainConfig};

use crate::args::TrainSourceArgs;
use crate::weights_io::save_server_model;
use crate::CliResult;

pub fn run(args: TrainSourceArgs) -> CliResult {
    let dataset = data::load_csv(&args.data, Some(args.input_width))?;
    let spec = ModelSpec::server(args.input_width, args.conv_filter, args.pool);
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        momentum: args.momentum,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let dp = (args.dp_noise > 0.0).then(|| DpConfig {
        clip_norm: args.dp_clip,
        noise_multiplier: args.dp_noise,
        delta: args.dp_delta,
    });

    let (state, report) = train_source(&dataset, &spec, &cfg, dp.as_ref())?;
    save_server_model(&args.out, &state, args.conv_filter, args.pool)?;

    println!("epochs_run={}", report.epochs_run);
    println!("train_accuracy={:.4}", report.train_accuracy);
    if let Some(v) = report.val_accuracy {
        println!("val_accuracy={v:.4}");
    }
    if let Some(p) = &report.privacy {
        println!("dp_epsilon={:.4}", p.epsilon);
        println!("dp_delta={:e}", p.delta);
        println!("dp_steps={}", p.steps);
    }
    if report.cubic_range_warning {
        let (lo, hi) = report.cubic_range.unwrap_or((0.0, 0.0));
        eprintln!(
            "warning: activation inputs spanned [{lo:.2}, {hi:.2}], outside the trusted cubic range"
        );
    }
    println!("weights={}", args.out.display());
    Ok(())
}

// Exit-code sanity: config errors map to usage (2), data errors to 3.
#[cfg(test)]
mod tests {
    use super::*;
    use crate::errors::CliError;

    #[test]
    fn dp_flag_zero_disables_dp() {
        let dp: Option<DpConfig> = (0.0f64 > 0.0).then(DpConfig::default);
        assert!(dp.is_none());
    }

    #[test]
    fn error_mapping() {
        let e: CliError = cryptotl_nn::NnError::Data {
            line: 3,
            msg: "bad".into(),
        }
        .into();
        assert_eq!(e.exit_code(), 3);
        let e: CliError = cryptotl_nn::NnError::Config("bad".into()).into();
        assert_eq!(e.exit_code(), 2);
    }
}
