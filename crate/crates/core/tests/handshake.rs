//! Live sessions on loopback TCP with the frame proxy in between.

use hesplit_core::app::attack::{control_session, judge, run_session, Action, AttackSetup};
use hesplit_core::channel::{MsgType, Role};
use hesplit_core::ckks::HeParams;
use hesplit_core::data::{generate_synth, SynthSpec};
use hesplit_core::nn::ModelVariant;
use hesplit_core::split::{Mode, TrainConfig};

fn setup(mode: Mode) -> AttackSetup {
    let ds = generate_synth(&SynthSpec { per_class: 2, ..SynthSpec::for_variant(ModelVariant::M1, 3) });
    let idx: Vec<usize> = (0..8).collect();
    let cfg = TrainConfig {
        epochs: 1,
        batch: 4,
        mode,
        he: (mode == Mode::SplitHe).then(|| HeParams::new(4096, &[40, 20, 20], 21).unwrap()),
        seed: 11,
        ..TrainConfig::default()
    };
    AttackSetup::new(cfg, ds.subset(&idx))
}

const M1: usize = 2;

#[test]
fn formal_messages_complete_and_each_one_is_protected() {
    let s = setup(Mode::SplitHe);
    let (ok, detail, observed) = control_session(&s).unwrap();
    assert!(ok, "{detail}");
    let types: Vec<_> = observed.iter().map(|o| o.msg_type.unwrap()).collect();
    assert_eq!(&types[M1..M1 + 4], &[MsgType::M1Setup, MsgType::M2Eval, MsgType::M3Grad, MsgType::M4GradPrime]);

    for k in 0..4 {
        let msg = M1 + k;
        let receiver = observed[msg].dir.receiver();
        for action in [Action::Tamper { msg, offset: observed[msg].len / 2, bit: 3 }, Action::Replay { msg }] {
            let out = run_session(&s, &[action]).unwrap();
            let r = judge(action, &out);
            assert_eq!(r.victim, Some(receiver));
            assert!(r.detected, "m{} {action}: {}", k + 1, r.victim_outcome);
            // the session ends for both parties
            assert!(out.client.is_err() && out.server.is_err());
        }
    }
}

#[test]
fn doctored_timestamp_on_m2_makes_the_client_abort() {
    let s = setup(Mode::SplitHe);
    // byte 5 is the lowest byte of the timestamp
    let a = Action::Tamper { msg: M1 + 1, offset: 5, bit: 4 };
    let out = run_session(&s, &[a]).unwrap();
    let r = judge(a, &out);
    assert_eq!(r.victim, Some(Role::Client));
    assert_eq!(r.victim_outcome, "BadSignature");
}

#[test]
fn plain_session_tamper_replay_delay() {
    let s = setup(Mode::SplitPlain);
    let (ok, _, observed) = control_session(&s).unwrap();
    assert!(ok);
    let am = observed.iter().find(|o| o.msg_type == Some(MsgType::TrainAm)).unwrap().index;

    let a = Action::Tamper { msg: am, offset: 100, bit: 0 };
    let r = judge(a, &run_session(&s, &[a]).unwrap());
    assert_eq!((r.victim, r.victim_outcome.as_str()), (Some(Role::Server), "BadSignature"));

    let a = Action::Replay { msg: am };
    let r = judge(a, &run_session(&s, &[a]).unwrap());
    assert_eq!(r.victim_outcome, "ReplayedSequence");

    let a = Action::Delay { msg: am, ms: 200 };
    let out = run_session(&s, &[a]).unwrap();
    assert!(out.client.is_ok() && out.server.is_ok());
    assert!(judge(a, &out).detected);

    let a = Action::Reorder { first: am, before: am + 2 };
    let r = judge(a, &run_session(&s, &[a]).unwrap());
    assert!(r.detected, "{}", r.victim_outcome);
}
