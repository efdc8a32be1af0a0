use hesplit_core::ckks::HeParams;
use hesplit_core::data::{generate_synth, train_test_split, SynthSpec};
use hesplit_core::nn::ModelVariant;
use hesplit_core::split::{run_in_memory, train_local, Mode, TrainConfig};

fn cfg(mode: Mode) -> TrainConfig {
    TrainConfig { epochs: 2, seed: 17, mode, ..Default::default() }
}

#[test]
fn plain_split_matches_local_per_batch() {
    let ds = generate_synth(&SynthSpec { per_class: 12, ..SynthSpec::for_variant(ModelVariant::M1, 4) });
    let (tr, te) = train_test_split(&ds, 0.8, 1).unwrap();
    let local = train_local(&cfg(Mode::Local), &tr, Some(&te), true).unwrap();
    let (c, s) = run_in_memory(&cfg(Mode::SplitPlain), &tr, Some(&te), true).unwrap();
    assert_eq!(c.trajectory.len(), local.trajectory.len());
    assert_eq!(s.trajectory.len(), local.trajectory.len());
    for (i, full) in local.trajectory.iter().enumerate() {
        let joined: Vec<f64> = c.trajectory[i].iter().chain(&s.trajectory[i]).copied().collect();
        let d = full.iter().zip(&joined).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-9, "batch {i}: {d}");
    }
    for (a, b) in local.metrics.iter().zip(&c.metrics) {
        assert_eq!(a.test_acc, b.test_acc);
        assert_eq!(a.train_acc, b.train_acc);
    }
    assert!(c.metrics.iter().all(|m| m.bytes_c2s > 0 && m.bytes_s2c > 0));
    assert_eq!(s.epochs_seen, 2);
}

#[test]
fn he_split_single_step_tracks_plain() {
    let ds = generate_synth(&SynthSpec { per_class: 1, ..SynthSpec::for_variant(ModelVariant::M1, 2) });
    let sub = ds.subset(&[0, 1, 2, 3]);
    let base = TrainConfig { epochs: 1, seed: 5, ..Default::default() };
    let plain = TrainConfig { mode: Mode::SplitPlain, ..base.clone() };
    let (pc, ps) = run_in_memory(&plain, &sub, None, false).unwrap();
    for batched in [false, true] {
        let he = TrainConfig {
            mode: Mode::SplitHe,
            he: Some(HeParams::new(4096, &[40, 20, 20], 21).unwrap()),
            batched,
            ..base.clone()
        };
        let (hc, hs) = run_in_memory(&he, &sub, None, false).unwrap();
        let rel = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            d / a.iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        assert!(rel(&ps.model.linear.w, &hs.model.linear.w) < 1e-2);
        assert!(rel(&pc.model.conv1.w, &hc.model.conv1.w) < 1e-2);
        assert_eq!(hc.cts_per_batch, vec![if batched { 256 } else { 4 }]);
    }
}
