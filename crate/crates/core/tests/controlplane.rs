use proptest::prelude::*;
use sptw_core::controlplane::*;
use sptw_core::detector::DetectionVerdict;
use sptw_core::scenario::{ScenarioSpec, Trajectory};

fn verdict(radar: bool) -> DetectionVerdict {
    DetectionVerdict { radar_present: radar, vote_fraction: if radar { 1.0 } else { 0.0 }, latency_s: 0.0, window_index: 0 }
}

fn short_spec(duration_s: f64) -> ScenarioSpec {
    let mut s = ScenarioSpec::waikiki();
    s.duration_s = duration_s;
    let start = s.node("SHIP").unwrap().position_m;
    s.trajectories.insert("SHIP".into(), Trajectory::straight(start, [0.0, -1.0], 10.0, duration_s));
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn random_verdicts_never_break_the_machine(stream in prop::collection::vec(prop::option::of(any::<bool>()), 1..2000)) {
        let cfg = ControlConfig::default();
        let mut s = BsState::transmitting(0.0);
        let mut last_t = f64::NEG_INFINITY;
        for (i, v) in stream.iter().enumerate() {
            let t = (i + 1) as f64 * 0.0274;
            let v = v.map(verdict);
            let (n, ev) = step_state(&s, v.as_ref(), t, &cfg).unwrap();
            let mut mode = s.mode;
            for e in &ev {
                prop_assert!(e.t_s >= last_t && e.t_s <= t + 1e-12);
                last_t = e.t_s;
                let to = match e.event {
                    EventKind::BSShutdown => BsMode::Vacated,
                    EventKind::BSPowerUpStart => BsMode::PoweringUp,
                    EventKind::BSResumed => BsMode::Transmitting,
                    _ => mode,
                };
                prop_assert!(is_legal(mode, to), "{:?} -> {:?}", mode, to);
                mode = to;
            }
            prop_assert_eq!(mode, n.mode);
            // powering up ignores verdicts; serving implies transmitting
            let resumed = ev.iter().any(|e| e.event == EventKind::BSResumed);
            if s.mode == BsMode::PoweringUp && !resumed {
                prop_assert_eq!(n.mode, BsMode::PoweringUp);
            }
            prop_assert!(!n.serving() || n.mode == BsMode::Transmitting);
            s = n;
        }
    }
}

#[test]
fn vacate_then_resume_after_clear_streak() {
    let cfg = ControlConfig::default();
    let (s, ev) = step_state(&BsState::transmitting(0.0), Some(&verdict(true)), 1.0, &cfg).unwrap();
    assert_eq!(s.mode, BsMode::Vacated);
    assert_eq!(ev[0].event, EventKind::BSShutdown);
    let mut s = s;
    for i in 0..4 {
        s = step_state(&s, Some(&verdict(false)), 2.0 + i as f64, &cfg).unwrap().0;
        assert_eq!(s.mode, BsMode::Vacated);
    }
    let (s, ev) = step_state(&s, Some(&verdict(false)), 6.0, &cfg).unwrap();
    assert_eq!((s.mode, ev[0].event), (BsMode::PoweringUp, EventKind::BSPowerUpStart));
    // radar during power-up is ignored
    let (s, ev) = step_state(&s, Some(&verdict(true)), 10.0, &cfg).unwrap();
    assert!(ev.is_empty() && s.mode == BsMode::PoweringUp);
    let (s, ev) = step_state(&s, None, 16.5, &cfg).unwrap();
    assert_eq!(ev[0].t_s, 16.0);
    assert_eq!(ev[0].event, EventKind::BSResumed);
    assert!(!s.serving());
    let (s, ev) = step_state(&s, None, 26.2, &cfg).unwrap();
    assert_eq!((ev[0].t_s, ev[0].event), (26.0, EventKind::UEReconnected));
    assert!(s.serving());
}

#[test]
fn clear_streak_resets_on_radar() {
    let cfg = ControlConfig::default();
    let mut s = step_state(&BsState::transmitting(0.0), Some(&verdict(true)), 1.0, &cfg).unwrap().0;
    for (i, r) in [false, false, false, false, true, false, false, false, false].iter().enumerate() {
        s = step_state(&s, Some(&verdict(*r)), 2.0 + i as f64, &cfg).unwrap().0;
    }
    assert_eq!(s.mode, BsMode::Vacated);
    assert_eq!(s.clear_streak, 4);
}

#[test]
fn cqi_is_monotone_and_throughput_gated() {
    let mut last = 0;
    for i in -200..400 {
        let c = cqi_for_sinr(i as f64 * 0.1);
        assert!((1..=15).contains(&c) && c >= last);
        last = c;
    }
    let k = KpiConfig::default();
    let on = BsState::transmitting(0.0);
    let off = BsState { mode: BsMode::Vacated, ..on.clone() };
    assert!(kpi_proxy(0.0, "UE-02", 30.0, &on, &k).throughput_mbps > 0.0);
    assert_eq!(kpi_proxy(0.0, "UE-02", 30.0, &off, &k).throughput_mbps, 0.0);
    assert!(kpi_proxy(0.0, "UE-02", 30.0, &on, &k).throughput_mbps <= k.offered_mbps);
}

#[test]
fn quiet_band_keeps_transmitting() {
    let cfg = ExperimentConfig { scenario: short_spec(2.0), ..Default::default() };
    let mut clf = baseline_classifier(&cfg.radar, 0.3).unwrap();
    let r = run_experiment(&cfg, Some(&mut clf)).unwrap();
    assert!(r.states.iter().all(|(_, s)| s.mode == BsMode::Transmitting && s.serving()));
    assert!(r.events.iter().all(|e| e.event == EventKind::VerdictChange));
    assert!(r.kpi.iter().all(|k| k.throughput_mbps > 0.0));
    assert_eq!(r.occupancy.len(), (2.0f64 / cfg.batch_period_s).floor() as usize);
}

#[test]
fn experiment_is_deterministic_and_writes_logs() {
    let cfg = ExperimentConfig {
        scenario: short_spec(2.0),
        schedule: Some(RadarSchedule { on_s: 0.5, off_s: 1.5 }),
        ..Default::default()
    };
    let run = || {
        let mut clf = baseline_classifier(&cfg.radar, 0.3).unwrap();
        run_experiment(&cfg, Some(&mut clf)).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a.events.windows(2).all(|w| w[0].t_s <= w[1].t_s));
    let shutdown = a.first(EventKind::BSShutdown).unwrap();
    assert!(shutdown > 0.5 && shutdown < 1.0, "{shutdown}");

    let dir = tempfile::tempdir().unwrap();
    a.write_events_jsonl(&dir.path().join("events.jsonl")).unwrap();
    a.write_kpi_csv(&dir.path().join("kpi.csv")).unwrap();
    a.write_occupancy_csv(&dir.path().join("occupancy.csv")).unwrap();
    let lines = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    let parsed: Vec<LogEntry> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(parsed, a.events);
}

#[test]
fn bad_schedule_rejected() {
    let cfg = ExperimentConfig {
        scenario: short_spec(2.0),
        schedule: Some(RadarSchedule { on_s: 1.5, off_s: 3.0 }),
        ..Default::default()
    };
    assert!(matches!(run_experiment(&cfg, None), Err(ControlError::InvalidParams(_))));
}
