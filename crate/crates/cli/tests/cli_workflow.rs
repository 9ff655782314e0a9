//! End-to-end command exercises at toy scale: the full key/train/serve/
//! fine-tune/predict workflow over the offline directory and live TCP,
//! exit-code contracts, reproducibility, and the feature cache.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cryptotl_nn::data::save_csv;
use cryptotl_nn::synth::separable_fixture;
use cryptotl_nn::Dataset;

const BIN: &str = env!("CARGO_BIN_EXE_cryptotl");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn cryptotl")
}

fn assert_exit(out: &Output, code: i32, what: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{what}: stdout={} stderr={}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn workspace(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cryptotl_cli_{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Toy-circuit geometry used throughout: width 128 gives batch capacity
/// 2 at the toy ring (512 slots, region 256).
const W: &str = "128";

fn write_fixture(dir: &Path, name: &str, rows: usize, seed: u64) -> PathBuf {
    let data = separable_fixture(128, rows, seed);
    let path = dir.join(name);
    save_csv(&path, &data, Some("test fixture")).unwrap();
    path
}

fn keygen(dir: &Path) {
    let out = run(
        dir,
        &[
            "keygen",
            "--preset",
            "toy",
            "--out-dir",
            "keys",
            "--seed",
            "1",
            "--item-width",
            W,
            "--conv-filter",
            "3",
            "--pool",
            "3",
        ],
    );
    assert_exit(&out, 0, "keygen");
}

fn train(dir: &Path, data: &str, out_name: &str) -> String {
    let out = run(
        dir,
        &[
            "train-source",
            "--data",
            data,
            "--out",
            out_name,
            "--input-width",
            W,
            "--conv-filter",
            "3",
            "--pool",
            "3",
            "--seed",
            "2",
        ],
    );
    assert_exit(&out, 0, "train-source");
    stdout(&out)
}

#[test]
fn full_offline_workflow_with_query_ceiling_and_cache() {
    let dir = workspace("offline");
    write_fixture(&dir, "source.csv", 160, 3);
    write_fixture(&dir, "target.csv", 10, 4); // 10 rows at p_impl=2 -> 5 queries
    keygen(&dir);

    let train_out = train(&dir, "source.csv", "server.ctlw");
    let acc: f64 = train_out
        .lines()
        .find_map(|l| l.strip_prefix("train_accuracy="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc >= 0.9, "separable fixture should train well, got {acc}");

    let out = run(
        &dir,
        &[
            "export-frozen",
            "--weights",
            "server.ctlw",
            "--out",
            "frozen.ctlw",
        ],
    );
    assert_exit(&out, 0, "export-frozen");

    // Phase 1: queries written, responses pending -> protocol exit code.
    let ft_args = [
        "finetune",
        "--offline-dir",
        "xfer",
        "--data",
        "target.csv",
        "--keys",
        "keys",
        "--out",
        "client.ctlw",
        "--seed",
        "5",
    ];
    let out = run(&dir, &ft_args);
    assert_exit(&out, 4, "finetune pending");

    // Exactly ceil(10/2) = 5 query frames on disk.
    let queries = cryptotl_protocol::OfflineClientIo::count_client_frames(
        &dir.join("xfer"),
        cryptotl_protocol::frame::TAG_QUERY,
    )
    .unwrap();
    assert_eq!(queries, 5, "query ceiling");

    // Phase 2: server answers; levels consumed are logged as 6.
    let out = run(
        &dir,
        &[
            "serve",
            "--weights",
            "frozen.ctlw",
            "--preset",
            "toy",
            "--allow-insecure",
            "--offline-dir",
            "xfer",
        ],
    );
    assert_exit(&out, 0, "serve offline");
    let log = stdout(&out);
    assert_eq!(log.matches("levels_consumed=6").count(), 5);

    // Phase 3: resume, train, write weights + feature cache.
    let out = run(&dir, &ft_args);
    assert_exit(&out, 0, "finetune resume");
    assert!(stdout(&out).contains("queries_issued=5"));
    assert!(dir.join("client.ctlw").exists());
    assert!(dir.join("client.ctlw.features.csv").exists());

    // Rerun with the cache present: zero new queries, identical weights.
    let weights_before = std::fs::read(dir.join("client.ctlw")).unwrap();
    let out = run(&dir, &ft_args);
    assert_exit(&out, 0, "finetune cached");
    assert!(stdout(&out).contains("queries_issued=0"));
    assert_eq!(
        std::fs::read(dir.join("client.ctlw")).unwrap(),
        weights_before
    );

    // Predict over the offline directory (fresh exchange dir).
    write_fixture(&dir, "inputs.csv", 4, 6);
    let pd_args = [
        "predict",
        "--offline-dir",
        "pxfer",
        "--input",
        "inputs.csv",
        "--keys",
        "keys",
        "--client-weights",
        "client.ctlw",
        "--seed",
        "7",
    ];
    let out = run(&dir, &pd_args);
    assert_exit(&out, 4, "predict pending");
    let out = run(
        &dir,
        &[
            "serve",
            "--weights",
            "frozen.ctlw",
            "--preset",
            "toy",
            "--allow-insecure",
            "--offline-dir",
            "pxfer",
        ],
    );
    assert_exit(&out, 0, "serve predict");
    let out = run(&dir, &pd_args);
    assert_exit(&out, 0, "predict resume");
    let text = stdout(&out);
    // One query frame for a batch within capacity... 4 items at p=2 -> 2.
    assert!(text.contains("queries_issued=2"), "{text}");
    assert_eq!(text.matches("class=").count(), 4);
    let grab = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap_or_else(|| panic!("{key} missing in {text}"))
            .parse()
            .unwrap()
    };
    // The plain client pass is always cheaper than the encrypted query.
    assert!(grab("t_c_s=") < grab("t_s_s="), "{text}");

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn live_tcp_roundtrip_matches_offline_results() {
    let dir = workspace("tcp");
    write_fixture(&dir, "source.csv", 160, 3);
    write_fixture(&dir, "target.csv", 8, 4);
    keygen(&dir);
    train(&dir, "source.csv", "server.ctlw");
    let out = run(
        &dir,
        &[
            "export-frozen",
            "--weights",
            "server.ctlw",
            "--out",
            "frozen.ctlw",
        ],
    );
    assert_exit(&out, 0, "export-frozen");

    // Offline reference run.
    let ft = |transport: &[&str], out_name: &str| -> Output {
        let mut args = vec![
            "finetune",
            "--data",
            "target.csv",
            "--keys",
            "keys",
            "--out",
            out_name,
            "--seed",
            "9",
        ];
        args.extend_from_slice(transport);
        run(&dir, &args)
    };
    assert_exit(
        &ft(&["--offline-dir", "xfer"], "offline.ctlw"),
        4,
        "pending",
    );
    assert_exit(
        &run(
            &dir,
            &[
                "serve",
                "--weights",
                "frozen.ctlw",
                "--preset",
                "toy",
                "--allow-insecure",
                "--offline-dir",
                "xfer",
            ],
        ),
        0,
        "serve offline",
    );
    assert_exit(
        &ft(&["--offline-dir", "xfer"], "offline.ctlw"),
        0,
        "offline done",
    );

    // TCP run; the port is derived from the pid to dodge collisions.
    let port = 20000 + (std::process::id() % 20000) as u16;
    let port_s = port.to_string();
    let mut server = Command::new(BIN)
        .current_dir(&dir)
        .args([
            "serve",
            "--weights",
            "frozen.ctlw",
            "--preset",
            "toy",
            "--allow-insecure",
            "--port",
            &port_s,
            "--max-sessions",
            "1",
        ])
        .spawn()
        .expect("spawn server");
    std::thread::sleep(std::time::Duration::from_millis(600));
    let addr = format!("127.0.0.1:{port}");
    let out = ft(&["--server", &addr], "tcp.ctlw");
    assert_exit(&out, 0, "finetune over tcp");
    server.wait().expect("server exits after max sessions");

    // Same seed, same data: byte-identical trained weights either way.
    assert_eq!(
        std::fs::read(dir.join("offline.ctlw")).unwrap(),
        std::fs::read(dir.join("tcp.ctlw")).unwrap(),
        "transports must not affect results"
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn reproducibility_and_policy_flags() {
    let dir = workspace("repro");
    write_fixture(&dir, "source.csv", 120, 5);

    // keygen twice with the same seed: identical fingerprint and bytes.
    keygen(&dir);
    let fp1 = std::fs::read(dir.join("keys/galois.ctlg")).unwrap();
    let meta = std::fs::read_to_string(dir.join("keys/meta.txt")).unwrap();
    assert!(
        meta.contains("security=INSECURE"),
        "toy keys carry the label"
    );
    let out = run(
        &dir,
        &[
            "keygen",
            "--preset",
            "toy",
            "--out-dir",
            "keys",
            "--seed",
            "1",
            "--item-width",
            W,
            "--conv-filter",
            "3",
            "--pool",
            "3",
        ],
    );
    assert_exit(&out, 2, "keygen without --force over existing files");
    let out = run(
        &dir,
        &[
            "keygen",
            "--preset",
            "toy",
            "--out-dir",
            "keys",
            "--seed",
            "1",
            "--item-width",
            W,
            "--conv-filter",
            "3",
            "--pool",
            "3",
            "--force",
        ],
    );
    assert_exit(&out, 0, "keygen --force");
    assert_eq!(std::fs::read(dir.join("keys/galois.ctlg")).unwrap(), fp1);

    // train twice: byte-identical weights.
    train(&dir, "source.csv", "a.ctlw");
    train(&dir, "source.csv", "b.ctlw");
    assert_eq!(
        std::fs::read(dir.join("a.ctlw")).unwrap(),
        std::fs::read(dir.join("b.ctlw")).unwrap()
    );

    // Usage errors -> 2.
    let out = run(&dir, &["keygen", "--preset", "bogus", "--out-dir", "k2"]);
    assert_exit(&out, 2, "unknown preset");
    let out = run(
        &dir,
        &[
            "serve",
            "--weights",
            "a.ctlw",
            "--preset",
            "toy",
            "--offline-dir",
            "x",
        ],
    );
    assert_exit(&out, 2, "toy serve without --allow-insecure");

    // Crypto errors -> 5: a 512-wide model cannot pack into the toy ring
    // (the duplicated width exceeds the slot count inside the scheme
    // layer).
    let wide = cryptotl_nn::synth::separable_fixture(512, 8, 9);
    cryptotl_nn::data::save_csv(&dir.join("wider.csv"), &wide, None).unwrap();
    let out = run(
        &dir,
        &[
            "train-source",
            "--data",
            "wider.csv",
            "--out",
            "wider.ctlw",
            "--input-width",
            "512",
            "--conv-filter",
            "3",
            "--pool",
            "3",
            "--epochs",
            "1",
        ],
    );
    assert_exit(&out, 0, "train wider");
    let out = run(
        &dir,
        &[
            "serve",
            "--weights",
            "wider.ctlw",
            "--preset",
            "toy",
            "--allow-insecure",
            "--offline-dir",
            "x",
        ],
    );
    assert_exit(&out, 5, "capacity failure surfaces as a crypto error");

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn data_errors_exit_three_with_line_numbers() {
    let dir = workspace("data");
    std::fs::write(dir.join("bad.csv"), "0,1.0,2.0\n1,oops,2.0\n").unwrap();
    let out = run(
        &dir,
        &[
            "train-source",
            "--data",
            "bad.csv",
            "--out",
            "w.ctlw",
            "--input-width",
            "2",
            "--conv-filter",
            "3",
            "--pool",
            "1",
        ],
    );
    assert_exit(&out, 3, "malformed row");
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("line 2"),
        "error cites the offending line"
    );

    // Single-class dataset: class-balance error (data exit code).
    let single = Dataset::new(vec![vec![0.0; 128]; 6], vec![1; 6]);
    save_csv(&dir.join("single.csv"), &single, None).unwrap();
    let out = run(
        &dir,
        &[
            "train-source",
            "--data",
            "single.csv",
            "--out",
            "w.ctlw",
            "--input-width",
            W,
            "--conv-filter",
            "3",
            "--pool",
            "3",
        ],
    );
    assert_exit(&out, 3, "single class rejected");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn dp_flags_reduce_and_report() {
    let dir = workspace("dp");
    write_fixture(&dir, "source.csv", 100, 8);
    // dp-noise 0: identical to the plain run.
    train(&dir, "source.csv", "plain.ctlw");
    let out = run(
        &dir,
        &[
            "train-source",
            "--data",
            "source.csv",
            "--out",
            "dp0.ctlw",
            "--input-width",
            W,
            "--conv-filter",
            "3",
            "--pool",
            "3",
            "--seed",
            "2",
            "--dp-noise",
            "0",
        ],
    );
    assert_exit(&out, 0, "dp zero");
    assert!(
        !stdout(&out).contains("dp_epsilon="),
        "no epsilon without noise"
    );
    assert_eq!(
        std::fs::read(dir.join("plain.ctlw")).unwrap(),
        std::fs::read(dir.join("dp0.ctlw")).unwrap()
    );

    // Noisier run reports a smaller epsilon.
    let eps_of = |noise: &str, name: &str| -> f64 {
        let out = run(
            &dir,
            &[
                "train-source",
                "--data",
                "source.csv",
                "--out",
                name,
                "--input-width",
                W,
                "--conv-filter",
                "3",
                "--pool",
                "3",
                "--seed",
                "2",
                "--dp-noise",
                noise,
            ],
        );
        assert_exit(&out, 0, "dp run");
        stdout(&out)
            .lines()
            .find_map(|l| l.strip_prefix("dp_epsilon="))
            .expect("epsilon printed")
            .parse()
            .unwrap()
    };
    let hi = eps_of("0.25", "dp25.ctlw");
    let lo = eps_of("1.0", "dp100.ctlw");
    assert!(hi > lo, "eps(0.25)={hi} must exceed eps(1.0)={lo}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn experiment_emits_both_csvs_with_correct_shape() {
    let dir = workspace("exp");
    let out = run(
        &dir,
        &[
            "experiment",
            "--scenario",
            "tl-curve",
            "--fractions",
            "20,60",
            "--seeds",
            "2",
            "--out",
            "sweep.csv",
            "--seed",
            "1",
            "--dim",
            "48",
            "--source-size",
            "160",
            "--target-size",
            "120",
            "--test-size",
            "60",
        ],
    );
    assert_exit(&out, 0, "experiment");
    let agg = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = agg.lines().collect();
    assert_eq!(rows[0], "fraction,method,accuracy_mean,accuracy_std");
    assert_eq!(rows.len() - 1, 2 * 2, "fractions x methods rows");
    let per_seed = std::fs::read_to_string(dir.join("sweep.csv.per_seed.csv")).unwrap();
    let rows: Vec<&str> = per_seed.lines().collect();
    assert_eq!(rows[0], "fraction,method,seed,accuracy");
    assert_eq!(
        rows.len() - 1,
        2 * 2 * 2,
        "fractions x methods x seeds rows"
    );

    // Fractions outside (0, 100] are usage errors.
    let out = run(
        &dir,
        &[
            "experiment",
            "--fractions",
            "0,50",
            "--out",
            "x.csv",
            "--dim",
            "16",
        ],
    );
    assert_exit(&out, 2, "zero fraction rejected");
    let _ = std::fs::remove_dir_all(&dir);
}
