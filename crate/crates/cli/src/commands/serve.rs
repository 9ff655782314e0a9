use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use cryptotl_he::ckks::CkksParams;
use cryptotl_he::layers::{plan_packing, prepare_frozen_operands};
use cryptotl_protocol::{serve_session, OfflineServerIo, QueryLog, ServerContext, StreamIo};

use crate::args::ServeArgs;
use crate::errors::CliError;
use crate::weights_io::load_frozen_any;
use crate::{env_max_frame, env_port, CliResult};

fn log_query(q: &QueryLog) {
    println!(
        "query seq={} bytes_in={} bytes_out={} levels_consumed={} wall_ms={:.1}",
        q.seq, q.bytes_in, q.bytes_out, q.levels_consumed, q.wall_ms
    );
}

pub fn run(args: ServeArgs) -> CliResult {
    let params = CkksParams::preset_by_name(&args.preset)
        .ok_or_else(|| CliError::Usage(format!("unknown preset {:?}", args.preset)))?;
    if params.is_insecure() && !args.allow_insecure {
        return Err(CliError::Usage(
            "the toy preset offers no security; pass --allow-insecure to serve it anyway".into(),
        ));
    }
    let frozen = load_frozen_any(&args.weights)?;
    let plan = plan_packing(&params, frozen.item_width())?;
    println!(
        "serving item_width={} p_impl={} p_naive={} preset={}",
        plan.item_width, plan.p_impl, plan.p_naive, args.preset
    );
    let operands = prepare_frozen_operands(&params, &plan, &frozen)?;
    let cx = ServerContext {
        params,
        operands,
        retain_keys: args.retain_keys,
    };

    if let Some(dir) = &args.offline_dir {
        let mut io = OfflineServerIo::new(dir, env_max_frame())?;
        let mut cached = None;
        let stats = serve_session(&mut io, &cx, &mut cached, log_query)?;
        println!(
            "offline_done queries={} recoverable_errors={} fatal={}",
            stats.queries, stats.recoverable_errors, stats.fatal
        );
        return Ok(());
    }

    let port = args.port.unwrap_or_else(env_port);
    let listener = TcpListener::bind(("127.0.0.1", port))
        .map_err(|e| CliError::Protocol(format!("bind 127.0.0.1:{port}: {e}")))?;
    println!("listening port={port}");

    let shutdown = Arc::new(AtomicBool::new(false));
    {
        let shutdown = shutdown.clone();
        // Stop accepting new sessions on interrupt; in-flight frames are
        // flushed per write, so a RESPONSE or ERROR is never truncated by
        // a shutdown between frames.
        let _ = ctrlc::set_handler(move || shutdown.store(true, Ordering::SeqCst));
    }

    let cx = Arc::new(cx);
    let mut sessions = 0u64;
    // Short accept timeout so the shutdown flag gets polled.
    listener.set_nonblocking(true).ok();
    loop {
        if shutdown.load(Ordering::SeqCst) {
            println!("shutdown");
            break;
        }
        match listener.accept() {
            Ok((stream, peer)) => {
                stream.set_nonblocking(false).ok();
                sessions += 1;
                println!("session={sessions} peer={peer}");
                let cx = cx.clone();
                let max = env_max_frame();
                // Sessions are independent; parallel connections each get
                // a thread and their own key cache.
                let handle = std::thread::spawn(move || {
                    let mut io = StreamIo::new(stream, max);
                    let mut cached = None;
                    match serve_session(&mut io, &cx, &mut cached, log_query) {
                        Ok(stats) => println!(
                            "session_done queries={} recoverable_errors={} fatal={}",
                            stats.queries, stats.recoverable_errors, stats.fatal
                        ),
                        Err(e) => eprintln!("session error: {e}"),
                    }
                });
                if args.max_sessions > 0 {
                    // Bounded mode (used by tests): serve sessions one at
                    // a time and exit after the quota.
                    let _ = handle.join();
                    if sessions >= args.max_sessions {
                        break;
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(std::time::Duration::from_millis(25));
            }
            Err(e) => return Err(CliError::Protocol(format!("accept: {e}"))),
        }
    }
    Ok(())
}
