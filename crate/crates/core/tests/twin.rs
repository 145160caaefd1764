use ntn_twin::envsim::LambdaSchedule;
use ntn_twin::experiment::{build_policy, simulate};
use ntn_twin::policy::PolicyKind;
use ntn_twin::scenario::Scenario;

fn scenario(twin: &str) -> Scenario {
    Scenario::parse(&format!(
        "horizon = 120\n[users]\nembb = 3\nurllc = 2\n[grid]\nnum_rbs = 8\n[twin]\n{twin}\n"
    ))
    .unwrap()
}

fn run(s: &Scenario) -> ntn_twin::experiment::RunTrace {
    let p = build_policy(s, PolicyKind::Orthogonal, None).unwrap();
    simulate(s, &p, LambdaSchedule::Constant(20.0), 9, s.horizon()).unwrap()
}

#[test]
fn minimal_delay_twin_never_diverges() {
    let trace = run(&scenario("delay = \"minimal\""));
    assert!(trace
        .calibration
        .iter()
        .all(|c| c.snr_mae == 0.0 && c.queue_mae == 0.0 && c.passed));
    assert!(trace.staleness.iter().all(|s| *s == 0));
}

#[test]
fn staleness_settles_at_the_configured_delay() {
    for (cfg, d) in [
        ("delay = \"moderate\"\nmoderate_slots = 3", 3u64),
        ("delay = \"significant\"\nsignificant_slots = 40", 40),
    ] {
        let trace = run(&scenario(cfg));
        for (t, s) in trace.staleness.iter().enumerate() {
            let t = t as u64;
            assert_eq!(*s, t.min(d), "slot {t}");
        }
        assert!(trace.calibration[d as usize..]
            .iter()
            .all(|c| c.snr_mae > 0.0));
    }
}

#[test]
fn decisions_use_only_delivered_state() {
    let trace = run(&scenario(
        "delay = \"moderate\"\nmoderate_slots = 2\ncadence = 5",
    ));
    for (m, (d, s)) in trace
        .slots
        .iter()
        .zip(trace.delivered_at.iter().zip(&trace.staleness))
    {
        assert!(*d <= m.t);
        assert!(*s <= 2 + 4, "slot {}: staleness {s}", m.t);
    }
}
