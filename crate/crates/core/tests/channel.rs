use std::sync::Arc;

use hesplit_core::channel::{
    ChannelError, Clock, KeyRing, ManualClock, MemTransport, MsgType, ReplayCache, Role, SecureChannel, SyncParams,
    SystemClock, Transport, DEFAULT_WINDOW_MS,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

type Chan = SecureChannel<MemTransport>;

fn pair_with(seed: u64, clock: Arc<dyn Clock>) -> (Chan, Chan) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (ck, sk) = (KeyRing::generate(&mut rng), KeyRing::generate(&mut rng));
    let (a, b) = MemTransport::pair();
    let (cp, sp) = (ck.public(), sk.public());
    (SecureChannel::new(a, Role::Client, ck, sp, clock.clone()), SecureChannel::new(b, Role::Server, sk, cp, clock))
}

fn pair(seed: u64) -> (Chan, Chan) {
    pair_with(seed, Arc::new(SystemClock))
}

fn params() -> SyncParams {
    SyncParams { lr: 0.001, batch: 4, samples: 8, epochs: 1, profile: b"variant=m1;mode=split-plain".to_vec() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    // Any single bit flip anywhere in a signed frame is rejected by the receiver.
    #[test]
    fn any_bit_flip_is_detected(seed in 0u64..1_000_000, ty_i in 0usize..19, len in 0usize..64, pos in any::<usize>(), bit in 0u8..8) {
        let (c, mut s) = pair(seed);
        let ty = MsgType::all()[ty_i % MsgType::all().len()];
        let payload: Vec<u8> = (0..len as u8).collect();
        let mut bytes = c.sign_frame(ty, SystemClock.now_ms(), 0, payload).encode().unwrap();
        let n = bytes.len();
        bytes[pos % n] ^= 1 << bit;
        let mut raw = c.into_transport();
        raw.send_frame(&bytes).unwrap();
        let err = s.recv().unwrap_err();
        prop_assert!(err.is_detection(), "{err:?}");
        prop_assert!(matches!(err, ChannelError::BadSignature | ChannelError::MalformedFrame(_)), "{err:?}");
        prop_assert_eq!(s.recv(), Err(ChannelError::Aborted));
    }
}

#[test]
fn honest_frames_pass_and_replays_fail() {
    let (mut c, mut s) = pair(1);
    for i in 0..5u8 {
        c.send(MsgType::TrainGradOut, &[i; 10]).unwrap();
        assert_eq!(s.recv().unwrap(), (MsgType::TrainGradOut, vec![i; 10]));
    }
    // same frame bytes twice: the second one carries an old sequence number
    let f = c.sign_frame(MsgType::Fin, SystemClock.now_ms(), 9, vec![]).encode().unwrap();
    let mut raw = c.into_transport();
    raw.send_frame(&f).unwrap();
    raw.send_frame(&f).unwrap();
    assert_eq!(s.recv().unwrap().0, MsgType::Fin);
    assert_eq!(s.recv(), Err(ChannelError::ReplayedSequence { seq: 9, last: 9 }));
}

#[test]
fn delayed_frames_inside_the_window_are_accepted() {
    let clock = Arc::new(ManualClock::new(10_000_000));
    let (c, mut s) = pair_with(3, clock.clone());
    let t = clock.now_ms();
    let early = c.sign_frame(MsgType::Fin, t, 0, vec![]).encode().unwrap();
    let late = c.sign_frame(MsgType::FinAck, t, 1, vec![]).encode().unwrap();
    let mut raw = c.into_transport();
    raw.send_frame(&early).unwrap();
    raw.send_frame(&late).unwrap();
    clock.advance(DEFAULT_WINDOW_MS);
    assert!(s.recv().is_ok());
    clock.advance(1);
    assert!(matches!(s.recv(), Err(ChannelError::StaleTimestamp { .. })));
}

#[test]
fn frames_do_not_cross_sessions() {
    // a frame from one session is rejected in another with the same keys
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let (ck, sk) = (KeyRing::generate(&mut rng), KeyRing::generate(&mut rng));
    let cache = ReplayCache::default();
    let mk = || {
        let (a, b) = MemTransport::pair();
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        (
            SecureChannel::new(a, Role::Client, ck.clone(), sk.public(), clock.clone()),
            SecureChannel::new(b, Role::Server, sk.clone(), ck.public(), clock).with_replay_cache(cache.clone()),
        )
    };
    let (mut c1, mut s1) = mk();
    let h = std::thread::spawn(move || {
        s1.server_sync(|_| Ok(())).unwrap();
        let r = s1.recv().unwrap();
        (s1, r)
    });
    c1.client_sync(&params()).unwrap();
    c1.send(MsgType::TrainGradOut, b"g").unwrap();
    let (_s1, _) = h.join().unwrap();

    // capture session-1 frames by building them again under session 1's id
    let stolen = c1.sign_frame(MsgType::Fin, SystemClock.now_ms(), 7, vec![]).encode().unwrap();

    let (mut c2, mut s2) = mk();
    let h = std::thread::spawn(move || {
        s2.server_sync(|_| Ok(())).unwrap();
        s2.recv()
    });
    c2.client_sync(&params()).unwrap();
    c2.send_raw(MsgType::Fin, &stolen).unwrap();
    assert_eq!(h.join().unwrap(), Err(ChannelError::BadSignature));
}

#[test]
fn replayed_sync_is_caught_across_sessions() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let (ck, sk) = (KeyRing::generate(&mut rng), KeyRing::generate(&mut rng));
    let cache = ReplayCache::default();
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);

    let (a, b) = MemTransport::pair();
    let c = SecureChannel::new(a, Role::Client, ck.clone(), sk.public(), clock.clone());
    let mut s =
        SecureChannel::new(b, Role::Server, sk.clone(), ck.public(), clock.clone()).with_replay_cache(cache.clone());
    let sync = c.sign_frame(MsgType::Sync, clock.now_ms(), 0, params().encode(&[7; 32])).encode().unwrap();
    let mut raw = c.into_transport();
    raw.send_frame(&sync).unwrap();
    assert!(s.server_sync(|_| Ok(())).is_ok());

    let (a, b) = MemTransport::pair();
    let mut s2 = SecureChannel::new(b, Role::Server, sk, ck.public(), clock).with_replay_cache(cache);
    let mut raw2 = a;
    raw2.send_frame(&sync).unwrap();
    assert!(matches!(s2.server_sync(|_| Ok(())), Err(ChannelError::ReplayedSequence { .. })));
}

#[test]
fn sealed_payloads_hide_plaintext() {
    let (mut c, s) = pair(6);
    let secret: Vec<u8> = (0..256u32).flat_map(|i| (i as f64 * 0.37).to_le_bytes()).collect();
    c.send(MsgType::TrainAm, &secret).unwrap();
    let mut raw = s.into_transport();
    let wire = raw.recv_frame().unwrap();
    for chunk in secret.chunks(8).filter(|w| w.iter().any(|&b| b != 0)) {
        assert!(!wire.windows(8).any(|w| w == chunk), "plaintext word visible on the wire");
    }
}

#[test]
fn sync_mismatch_is_rejected() {
    let (mut c, mut s) = pair(7);
    let h = std::thread::spawn(move || s.server_sync(|p| if p.lr == 0.001 { Err("lr".into()) } else { Ok(()) }));
    let r = c.client_sync(&params());
    assert!(r.is_err());
    assert!(matches!(h.join().unwrap(), Err(ChannelError::SyncMismatch(_))));
}
