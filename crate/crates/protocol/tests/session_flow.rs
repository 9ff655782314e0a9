//! End-to-end protocol exercises at the toy preset: loopback sessions
//! against the real encrypted pipeline, state-machine violations, the
//! query ceiling, offline directory mode, and malformed-input behavior.

use std::sync::Arc;

use cryptotl_he::ckks::{gen_galois_keys, keygen, CkksParams};
use cryptotl_he::layers::{
    plaintext_frozen_forward, plan_packing, plan_rotations, prepare_frozen_operands, FrozenWeights,
    PackingPlan,
};
use cryptotl_protocol::codec::{self, WireCodec};
use cryptotl_protocol::frame::{ErrorCode, TAG_EVALKEYS, TAG_HELLO, TAG_QUERY, TAG_RESPONSE};
use cryptotl_protocol::{
    channel_pair, client_query, serve_session, ClientContext, FrameIo, OfflineClientIo,
    OfflineServerIo, ProtocolError, RawFrame, ServerContext,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const T: usize = 16;
const CONV_F: usize = 3;
const POOL: usize = 3;

fn build_world(seed: u64) -> (Arc<CkksParams>, PackingPlan, ClientContext, ServerContext) {
    let params = CkksParams::preset_toy_insecure();
    let plan = plan_packing(&params, T).unwrap();
    let (sk, pk, relin) = keygen(&params, seed).unwrap();
    let steps: Vec<i32> = plan_rotations(&plan, CONV_F, POOL).into_iter().collect();
    let galois = gen_galois_keys(&sk, &steps, seed + 1).unwrap();
    let weights = FrozenWeights::random(T, CONV_F, POOL, seed + 2);
    let operands = prepare_frozen_operands(&params, &plan, &weights).unwrap();
    let client = ClientContext {
        params: params.clone(),
        plan: plan.clone(),
        sk,
        pk,
        relin,
        galois,
        feature_width: T - POOL + 1,
    };
    let server = ServerContext {
        params: params.clone(),
        operands,
        retain_keys: false,
    };
    (params, plan, client, server)
}

fn world_weights(seed: u64) -> FrozenWeights {
    FrozenWeights::random(T, CONV_F, POOL, seed + 2)
}

#[test]
fn loopback_happy_path_matches_plaintext_oracle() {
    let (_, _, client, server) = build_world(11);
    let weights = world_weights(11);
    let (mut cio, mut sio) = channel_pair();
    let srv = std::thread::spawn(move || {
        let mut cached = None;
        serve_session(&mut sio, &server, &mut cached, |_| {}).unwrap()
    });

    let items: Vec<Vec<f64>> = {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        (0..5)
            .map(|_| (0..T).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(22);
    let features = client_query(&mut cio, &items, &client, &mut rng).unwrap();
    drop(cio);
    let stats = srv.join().unwrap();

    // 5 items at p_impl = 16 regions... the toy plan packs many per query.
    assert_eq!(
        stats.queries as usize,
        items.len().div_ceil(client.plan.p_impl)
    );
    assert!(!stats.fatal);

    let expect = plaintext_frozen_forward(&items, &weights).unwrap();
    for (got, want) in features.iter().zip(&expect) {
        assert_eq!(got.len(), T - POOL + 1);
        let worst = got
            .iter()
            .zip(want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 5e-2, "loopback error {worst:.3e}");
    }
}

#[test]
fn two_sequential_queries_reuse_cached_keys() {
    let (_, plan, client, server) = build_world(13);
    let (mut cio, mut sio) = channel_pair();
    let srv = std::thread::spawn(move || {
        let mut cached = None;
        serve_session(&mut sio, &server, &mut cached, |_| {}).unwrap()
    });
    // Two batches in one session: issue enough items for 2 queries.
    let n = plan.p_impl + 1;
    let items: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64; T]).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let features = client_query(&mut cio, &items, &client, &mut rng).unwrap();
    drop(cio);
    let stats = srv.join().unwrap();
    assert_eq!(stats.queries, 2);
    assert_eq!(features.len(), n);
}

#[test]
fn query_before_keys_is_fatal_keys_required() {
    let (params, _, client, server) = build_world(17);
    let (mut cio, mut sio) = channel_pair();
    let srv = std::thread::spawn(move || {
        let mut cached = None;
        serve_session(&mut sio, &server, &mut cached, |_| {}).unwrap()
    });

    cio.write_frame(&RawFrame::new(
        TAG_HELLO,
        codec::encode_hello(params.fingerprint()),
    ))
    .unwrap();
    let ack = cio.read_frame().unwrap().unwrap();
    assert_eq!(ack.tag, TAG_HELLO);

    // Skip EVALKEYS and fire a QUERY.
    let mut rng = ChaCha20Rng::seed_from_u64(41);
    let pt = cryptotl_he::ckks::encode(&params, &[0.0; 4], params.max_level(), 22.0).unwrap();
    let ct = cryptotl_he::ckks::encrypt(&pt, &client.pk, &mut rng).unwrap();
    cio.write_frame(&RawFrame::new(TAG_QUERY, codec::encode_query(0, &ct)))
        .unwrap();
    let err = cio.read_frame().unwrap().unwrap();
    let (code, msg) = err.parse_error().unwrap();
    assert_eq!(code, ErrorCode::KeysRequired as u8);
    assert!(msg.contains("keys required"));
    // Connection closes.
    drop(cio);
    let stats = srv.join().unwrap();
    assert!(stats.fatal);
    assert_eq!(stats.queries, 0);
}

#[test]
fn wrong_fingerprint_hello_is_rejected() {
    let (_, _, _, server) = build_world(19);
    let (mut cio, mut sio) = channel_pair();
    let srv = std::thread::spawn(move || {
        let mut cached = None;
        serve_session(&mut sio, &server, &mut cached, |_| {}).unwrap()
    });
    let bogus = cryptotl_he::ckks::Fingerprint([7u8; 32]);
    cio.write_frame(&RawFrame::new(TAG_HELLO, codec::encode_hello(bogus)))
        .unwrap();
    let err = cio.read_frame().unwrap().unwrap();
    let (code, _) = err.parse_error().unwrap();
    assert_eq!(code, ErrorCode::FingerprintMismatch as u8);
    drop(cio);
    assert!(srv.join().unwrap().fatal);
}

#[test]
fn random_frame_orderings_never_violate_the_machine() {
    // Shuffled frame sequences: the server must answer each prefix
    // according to the machine and never panic.
    let (params, _, client, _) = build_world(23);
    let hello = RawFrame::new(TAG_HELLO, codec::encode_hello(params.fingerprint()));
    let keys = RawFrame::new(
        TAG_EVALKEYS,
        codec::encode_evalkeys(&client.galois, &client.relin),
    );
    let mut rng = ChaCha20Rng::seed_from_u64(51);
    let pt = cryptotl_he::ckks::encode(&params, &[0.1; 4], params.max_level(), 22.0).unwrap();
    let ct = cryptotl_he::ckks::encrypt(&pt, &client.pk, &mut rng).unwrap();
    let query = RawFrame::new(TAG_QUERY, codec::encode_query(0, &ct));

    let orderings: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    for order in orderings {
        let (_, _, _, server) = build_world(23);
        let (mut cio, mut sio) = channel_pair();
        let srv = std::thread::spawn(move || {
            let mut cached = None;
            serve_session(&mut sio, &server, &mut cached, |_| {})
        });
        let frames = [&hello, &keys, &query];
        for &i in &order {
            if cio.write_frame(frames[i]).is_err() {
                break; // server already closed on a violation
            }
        }
        // Close our write half and drain whatever the server answers, so
        // its writes never land on a dead channel.
        cio.close_write();
        while let Ok(Some(_)) = cio.read_frame() {}
        let stats = srv.join().unwrap().unwrap();
        if order == [0, 1, 2] {
            assert!(!stats.fatal, "canonical order must succeed");
            assert_eq!(stats.queries, 1);
        } else {
            // Every out-of-order prefix is a violation.
            assert!(stats.fatal, "ordering {order:?} should be fatal");
        }
    }
}

#[test]
fn offline_directory_roundtrip() {
    let dir = std::env::temp_dir().join(format!("cryptotl_offline_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let (_, plan, client, server) = build_world(29);
    let weights = world_weights(29);

    let items: Vec<Vec<f64>> = (0..3).map(|i| vec![(i as f64 - 1.0) / 2.0; T]).collect();

    // Phase 1: client writes request frames; responses are pending.
    let mut cio = OfflineClientIo::new(&dir, cryptotl_protocol::DEFAULT_MAX_FRAME).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(61);
    match client_query(&mut cio, &items, &client, &mut rng) {
        Err(ProtocolError::Pending(_)) => {}
        other => panic!("expected pending, got {other:?}"),
    }
    let queries = OfflineClientIo::count_client_frames(&dir, TAG_QUERY).unwrap();
    assert_eq!(queries, items.len().div_ceil(plan.p_impl));

    // Phase 2: server pass over the directory.
    let mut sio = OfflineServerIo::new(&dir, cryptotl_protocol::DEFAULT_MAX_FRAME).unwrap();
    let mut cached = None;
    let stats = serve_session(&mut sio, &server, &mut cached, |_| {}).unwrap();
    assert_eq!(stats.queries as usize, queries);

    // Phase 3: client resumes; existing c-frames are kept as-is.
    let mut cio = OfflineClientIo::new(&dir, cryptotl_protocol::DEFAULT_MAX_FRAME).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(62);
    let features = client_query(&mut cio, &items, &client, &mut rng).unwrap();
    let expect = plaintext_frozen_forward(&items, &weights).unwrap();
    for (got, want) in features.iter().zip(&expect) {
        let worst = got
            .iter()
            .zip(want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 5e-2);
    }
    let (c_frames, s_frames) = cryptotl_protocol::transport::scan_offline_dir(&dir).unwrap();
    assert_eq!(c_frames, 2 + queries); // hello, keys, queries
    assert_eq!(s_frames, 1 + queries); // hello ack + responses
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn evaluation_errors_are_recoverable() {
    // A ciphertext already stripped below the depth budget triggers an
    // Evaluation error; the session answers and keeps going.
    let (params, _, client, server) = build_world(31);
    let (mut cio, mut sio) = channel_pair();
    let srv = std::thread::spawn(move || {
        let mut cached = None;
        serve_session(&mut sio, &server, &mut cached, |_| {}).unwrap()
    });

    cio.write_frame(&RawFrame::new(
        TAG_HELLO,
        codec::encode_hello(params.fingerprint()),
    ))
    .unwrap();
    let _ = cio.read_frame().unwrap().unwrap();
    cio.write_frame(&RawFrame::new(
        TAG_EVALKEYS,
        codec::encode_evalkeys(&client.galois, &client.relin),
    ))
    .unwrap();

    let mut rng = ChaCha20Rng::seed_from_u64(71);
    let pt = cryptotl_he::ckks::encode(&params, &[0.1; T], params.max_level(), 22.0).unwrap();
    let shallow = cryptotl_he::ckks::encrypt(&pt, &client.pk, &mut rng)
        .unwrap()
        .rescale()
        .unwrap();
    cio.write_frame(&RawFrame::new(TAG_QUERY, codec::encode_query(9, &shallow)))
        .unwrap();
    let err = cio.read_frame().unwrap().unwrap();
    let (code, _) = err.parse_error().unwrap();
    assert_eq!(code, ErrorCode::Evaluation as u8);

    // Session is still alive: a proper query succeeds.
    let good = cryptotl_he::ckks::encrypt(&pt, &client.pk, &mut rng).unwrap();
    cio.write_frame(&RawFrame::new(TAG_QUERY, codec::encode_query(10, &good)))
        .unwrap();
    let resp = cio.read_frame().unwrap().unwrap();
    assert_eq!(resp.tag, TAG_RESPONSE);
    drop(cio);
    let stats = srv.join().unwrap();
    assert_eq!(stats.queries, 1);
    assert_eq!(stats.recoverable_errors, 1);
    assert!(!stats.fatal);
}

#[test]
fn serialized_key_material_roundtrips() {
    let (params, _, client, _) = build_world(37);
    let g = client.galois.wire_encode();
    let back = codec::deserialize_galois_keys(&g, &params).unwrap();
    assert_eq!(back.steps(), client.galois.steps());
    assert_eq!(codec::serialize_galois_keys(&back), g);

    let r = client.relin.wire_encode();
    let back = codec::deserialize_relin_key(&r, &params).unwrap();
    assert_eq!(codec::serialize_relin_key(&back), r);

    let p = client.pk.wire_encode();
    let back = codec::deserialize_public_key(&p, &params).unwrap();
    assert_eq!(codec::serialize_public_key(&back), p);
}

#[test]
fn light_fuzz_of_codecs_yields_structured_errors_only() {
    // The heavy million-frame fuzz lives in the acceptance suite; this is
    // the fast regression version.
    let (params, _, client, _) = build_world(41);
    let mut rng = ChaCha20Rng::seed_from_u64(81);
    let pt = cryptotl_he::ckks::encode(&params, &[0.5; 8], params.max_level(), 22.0).unwrap();
    let ct = cryptotl_he::ckks::encrypt(&pt, &client.pk, &mut rng).unwrap();
    let valid = codec::serialize_ciphertext(&ct);
    for i in 0..2_000 {
        let mut bytes = valid.clone();
        let flips = 1 + (i % 8);
        for _ in 0..flips {
            let idx = rng.gen_range(0..bytes.len());
            bytes[idx] ^= rng.gen::<u8>() | 1;
        }
        let _ = codec::deserialize_ciphertext(&bytes, &params); // must not panic
        let cut = rng.gen_range(0..bytes.len());
        let _ = codec::deserialize_ciphertext(&bytes[..cut], &params);
    }
    for _ in 0..2_000 {
        let len = rng.gen_range(0..256);
        let junk: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let _ = codec::deserialize_ciphertext(&junk, &params);
        let _ = codec::deserialize_frozen_weights(&junk);
        let _ = codec::deserialize_galois_keys(&junk, &params);
        let _ = RawFrame::from_bytes(&junk, 1 << 20);
    }
}
