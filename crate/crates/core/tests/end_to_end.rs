use m2p_core::estimator::{correlate_traces, decode_display_trace, decode_pot_trace, estimate_remote, LagSearch};
use m2p_core::experiment::{analyze, simulate};
use m2p_core::netsim::{remote_capture, NetworkConfig};
use m2p_core::rig::{capture_local, PipelineConfig};
use m2p_core::scenario::{run_capture, Mode, Scenario};
use m2p_core::trace::{read_trace, trace_to_string};

fn quiet(mut s: Scenario) -> Scenario {
    s.sensors.pot_noise_sigma = 0.0;
    s.sensors.photo_noise_sigma = 0.0;
    s
}

#[test]
fn zero_delay_display_tracks_the_potentiometer() {
    let s = Scenario::preset("zero-delay").unwrap();
    let c = run_capture(&s, "A", 3000.0).unwrap();
    let pot = decode_pot_trace(&c).unwrap();
    let display = decode_display_trace(&c).unwrap();
    let gaps: Vec<i64> = pot
        .values
        .iter()
        .zip(&display.values)
        .map(|(p, d)| (p.value() as i64 - d.value() as i64).abs())
        .collect();
    let within_one = gaps.iter().filter(|&&g| g <= 1).count();
    assert!(within_one as f64 >= 0.99 * gaps.len() as f64, "{within_one}/{}", gaps.len());
    assert!(gaps.iter().all(|&g| g <= 2));
    let r = correlate_traces(&pot, &display, LagSearch::causal(200)).unwrap();
    assert!(r.best_lag_ms <= 2);
}

#[test]
fn noise_free_latency_matches_composition() {
    let configs = [
        PipelineConfig::default(),
        PipelineConfig { tracking_delay_ms: 4.0, render_compute_ms: 3.0, ..Default::default() },
        PipelineConfig { refresh_hz: 120.0, frame_delay_queue_len: 2, ..Default::default() },
        PipelineConfig { refresh_hz: 60.0, display_persistence_ms: 2.0, render_compute_ms: 5.0, ..Default::default() },
    ];
    for p in configs {
        let mut s = quiet(Scenario::default());
        s.pipeline = p;
        for seed in 1..=3 {
            let out = simulate(&s.clone().with_seed(seed)).unwrap();
            let measured = out.report.motion_to_photon_ms as f64;
            let expected = p.expected_latency_ms();
            assert!(
                (measured - expected).abs() <= 2.0,
                "{p:?} seed {seed}: measured {measured}, expected {expected:.2}"
            );
        }
    }
}

#[test]
fn capture_is_reproducible_bit_for_bit() {
    let s = Scenario::preset("remote-default").unwrap();
    let rs = s.remote().unwrap();
    assert_eq!(remote_capture(&rs, 4, 2000.0).unwrap(), remote_capture(&rs, 4, 2000.0).unwrap());
}

#[test]
fn perfect_link_and_clocks_reduce_remote_to_local() {
    let mut s = Scenario::preset("remote-default").unwrap();
    s.clock_a = Default::default();
    s.clock_b = Default::default();
    s.gps.jitter_sigma_us = 0.0;
    s.receiver_pipeline = Some(s.pipeline);
    s.net = Some(NetworkConfig { send_rate_hz: f64::INFINITY, one_way_delay_ms: 0.0, jitter_ms: 0.0 });
    for seed in 1..=5 {
        let out = simulate(&s.clone().with_seed(seed)).unwrap();
        let remote = out.report.remote.unwrap().latency_ms;
        assert!(
            (remote - out.report.motion_to_photon_ms).abs() <= 2,
            "remote {remote} vs local {}",
            out.report.motion_to_photon_ms
        );
    }
}

#[test]
fn remote_spread_over_send_phases_is_below_one_interval() {
    let s = Scenario::preset("remote-default").unwrap();
    let lags: Vec<i64> = (1..=20)
        .map(|seed| simulate(&s.clone().with_seed(seed)).unwrap().report.remote.unwrap().latency_ms)
        .collect();
    let spread = lags.iter().max().unwrap() - lags.iter().min().unwrap();
    assert!((spread as f64) < s.net.unwrap().send_interval_ms(), "{lags:?}");
}

#[test]
fn remote_latency_never_below_receiver_local() {
    let mut s = Scenario::preset("remote-default").unwrap();
    for (rate, delay, jitter) in [(29.0, 0.5, 0.0), (60.0, 0.0, 0.0), (10.0, 20.0, 5.0), (f64::INFINITY, 0.0, 0.0)] {
        s.net = Some(NetworkConfig { send_rate_hz: rate, one_way_delay_ms: delay, jitter_ms: jitter });
        let rs = s.remote().unwrap();
        // A link that adds nothing leaves only the 1 ms sampling grid between
        // the two estimates.
        let slack = if rs.net.expected_added_latency_ms() == 0.0 { 1 } else { 0 };
        for seed in 1..=3 {
            let (a, b) = remote_capture(&rs, seed, s.duration_ms).unwrap();
            let remote = estimate_remote(
                &decode_pot_trace(&a).unwrap(),
                &decode_display_trace(&b).unwrap(),
                s.lag_search(),
            )
            .unwrap()
            .best_lag_ms;
            let own = capture_local(&rs.receiver, &rs.gps, seed, s.duration_ms).unwrap();
            let local = correlate_traces(
                &decode_pot_trace(&own).unwrap(),
                &decode_display_trace(&own).unwrap(),
                s.lag_search(),
            )
            .unwrap()
            .best_lag_ms;
            assert!(remote + slack >= local, "rate {rate}: remote {remote} < local {local}");
        }
    }
}

#[test]
fn reports_from_memory_and_from_files_agree() {
    let s = Scenario::preset("remote-default").unwrap();
    let out = simulate(&s).unwrap();
    let reread: Vec<_> = out
        .captures
        .iter()
        .map(|c| read_trace(trace_to_string(c).as_bytes()).unwrap())
        .collect();
    assert_eq!(reread, out.captures);
    let again = analyze(&reread, s.lag_search(), out.audio).unwrap();
    assert_eq!(again.to_text(), out.report.to_text());
}

#[test]
fn frame_queue_shifts_latency_by_whole_frames() {
    let base = Scenario::preset("vive-baseline").unwrap();
    let delayed = Scenario::preset("frame-delay-5").unwrap();
    let a = simulate(&base).unwrap().report.motion_to_photon_ms;
    let b = simulate(&delayed).unwrap().report.motion_to_photon_ms;
    assert!(((b - a) as f64 - 5.0 * 1000.0 / 90.0).abs() <= 3.0, "{a} -> {b}");
}

#[test]
fn remote_mode_without_net_is_rejected() {
    let mut s = Scenario::preset("vive-baseline").unwrap();
    s.mode = Mode::Remote;
    assert!(simulate(&s).is_err());
}

#[test]
fn negative_lags_need_opt_in() {
    let s = Scenario::preset("extrapolation-overshoot").unwrap();
    let c = run_capture(&s, "A", s.duration_ms).unwrap();
    let pot = decode_pot_trace(&c).unwrap();
    let display = decode_display_trace(&c).unwrap();
    let signed = correlate_traces(&pot, &display, LagSearch::symmetric(500)).unwrap();
    let causal = correlate_traces(&pot, &display, LagSearch::causal(500)).unwrap();
    assert!(signed.best_lag_ms < 0);
    assert!(causal.best_lag_ms >= 0);
    let report = simulate(&s).unwrap().report;
    assert!(report.warnings.iter().any(|w| w.contains("negative")));
}
