//! Drifting crystal clocks disciplined once by a GPS timepulse.
//!
//! True time is measured in microseconds from the nominal edge of a reference
//! UTC second (`utc_origin`). A station's clock reads
//! `epoch_offset + t · (1 + drift·10⁻⁶)`. Synchronizing against a timepulse
//! re-anchors the offset only; the rate error keeps accumulating afterwards.
//! Samples are timestamped against raw crystal ticks, not against a counter
//! re-disciplined every second.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MICROS_PER_SECOND: i64 = 1_000_000;

/// RMS accuracy of the receiver's timepulse output.
pub const DEFAULT_PULSE_JITTER_US: f64 = 30.0;

/// Worst-case crystal tolerance assumed for the microcontroller.
pub const WORST_CASE_DRIFT_PPM: f64 = 100.0;

/// Delay between a timepulse edge and the serial message naming its second.
pub const DEFAULT_MESSAGE_DELAY_US: i64 = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClockError {
    #[error("UTC message for second {message} does not match pulse for second {pulse}")]
    SecondMismatch { pulse: i64, message: i64 },
    #[error("UTC message arrived at {arrival_us} µs, outside the second following its pulse at {pulse_us} µs")]
    MessageTiming { pulse_us: f64, arrival_us: i64 },
    #[error("clock is not synchronized")]
    Unsynchronized,
    #[error("start second {start} is not after the sync second {synced}")]
    StartNotInFuture { synced: i64, start: i64 },
    #[error("drift of {0} ppm would make the clock non-monotonic")]
    InvalidDrift(f64),
}

/// GPS receiver and start-scheduling parameters shared by all stations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpsConfig {
    pub jitter_sigma_us: f64,
    pub message_delay_ms: f64,
    /// UTC second whose nominal edge is true time zero; stations sync to it.
    pub utc_origin_s: i64,
    /// Seconds between the sync pulse and the agreed measurement start.
    pub start_delay_s: i64,
}

impl Default for GpsConfig {
    fn default() -> Self {
        GpsConfig {
            jitter_sigma_us: DEFAULT_PULSE_JITTER_US,
            message_delay_ms: DEFAULT_MESSAGE_DELAY_US as f64 / 1000.0,
            utc_origin_s: 1_700_000_000,
            start_delay_s: 1,
        }
    }
}

impl GpsConfig {
    pub fn message_delay_us(&self) -> i64 {
        (self.message_delay_ms * 1000.0).round() as i64
    }
}

/// Anchor recorded at a timepulse edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncState {
    pub utc_second: i64,
    /// Local clock reading at the (jittered) edge.
    pub local_edge_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub drift_ppm: f64,
    /// Local reading at true time zero.
    pub epoch_offset_us: f64,
    /// PRNG stream id for this station's timepulse jitter.
    pub seed: u64,
    pub sync_state: Option<SyncState>,
}

impl SimClock {
    pub fn new(drift_ppm: f64, epoch_offset_us: f64, seed: u64) -> Result<Self, ClockError> {
        if !drift_ppm.is_finite() || drift_ppm.abs() >= 1e6 {
            return Err(ClockError::InvalidDrift(drift_ppm));
        }
        Ok(SimClock {
            drift_ppm,
            epoch_offset_us,
            seed,
            sync_state: None,
        })
    }

    pub fn ideal() -> Self {
        SimClock {
            drift_ppm: 0.0,
            epoch_offset_us: 0.0,
            seed: 0,
            sync_state: None,
        }
    }

    fn rate(&self) -> f64 {
        1.0 + self.drift_ppm * 1e-6
    }

    /// Local clock reading at a true instant.
    pub fn local_now(&self, true_time_us: f64) -> f64 {
        self.epoch_offset_us + true_time_us * self.rate()
    }

    /// Inverse of [`SimClock::local_now`].
    pub fn true_time_at_local(&self, local_us: f64) -> f64 {
        (local_us - self.epoch_offset_us) / self.rate()
    }

    pub fn is_synchronized(&self) -> bool {
        self.sync_state.is_some()
    }

    /// The clock's estimate of UTC at a true instant, split into the anchor
    /// second and microseconds elapsed since it (which may exceed one
    /// second). Drift is not corrected.
    pub fn utc_estimate(&self, true_time_us: f64) -> Result<(i64, f64), ClockError> {
        let sync = self.sync_state.ok_or(ClockError::Unsynchronized)?;
        Ok((sync.utc_second, self.local_now(true_time_us) - sync.local_edge_us))
    }

    /// Estimated UTC in microseconds since the UNIX epoch.
    pub fn utc_estimate_us(&self, true_time_us: f64) -> Result<f64, ClockError> {
        let (second, elapsed) = self.utc_estimate(true_time_us)?;
        Ok(second as f64 * MICROS_PER_SECOND as f64 + elapsed)
    }
}

/// One rising edge of the receiver's timepulse output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimepulseEvent {
    /// Nominal full-second boundary on the true-time axis.
    pub true_time_us: i64,
    /// When the edge actually rose.
    pub jittered_time_us: f64,
    pub utc_second: i64,
}

impl TimepulseEvent {
    pub fn jitter_us(&self) -> f64 {
        self.jittered_time_us - self.true_time_us as f64
    }
}

/// Serial UTC message that labels the preceding timepulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UtcMessage {
    pub utc_second: i64,
    pub arrival_true_time_us: i64,
}

impl UtcMessage {
    /// The message for `pulse`, arriving `delay_us` after its nominal edge.
    pub fn following(pulse: &TimepulseEvent, delay_us: i64) -> Self {
        UtcMessage {
            utc_second: pulse.utc_second,
            arrival_true_time_us: pulse.true_time_us + delay_us,
        }
    }
}

/// Timepulse edges at one-second spacing starting at `start_utc`, whose
/// nominal edge is true time zero. Each edge carries independent Gaussian
/// jitter with standard deviation `jitter_sigma_us`.
pub fn generate_timepulses(
    seed: u64,
    start_utc: i64,
    count: usize,
    jitter_sigma_us: f64,
) -> Vec<TimepulseEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, jitter_sigma_us.max(0.0)).expect("finite sigma");
    (0..count)
        .map(|i| {
            let true_time_us = i as i64 * MICROS_PER_SECOND;
            let jitter = if jitter_sigma_us > 0.0 {
                normal.sample(&mut rng)
            } else {
                0.0
            };
            TimepulseEvent {
                true_time_us,
                jittered_time_us: true_time_us as f64 + jitter,
                utc_second: start_utc + i as i64,
            }
        })
        .collect()
}

/// Anchors `clock` to the pulse named by `msg`. The message must carry the
/// pulse's second and arrive within the second after the edge.
pub fn sync_to_gps(
    clock: &SimClock,
    pulse: &TimepulseEvent,
    msg: &UtcMessage,
) -> Result<SimClock, ClockError> {
    if msg.utc_second != pulse.utc_second {
        return Err(ClockError::SecondMismatch {
            pulse: pulse.utc_second,
            message: msg.utc_second,
        });
    }
    let arrival = msg.arrival_true_time_us as f64;
    if arrival <= pulse.jittered_time_us
        || arrival >= pulse.true_time_us as f64 + MICROS_PER_SECOND as f64
    {
        return Err(ClockError::MessageTiming {
            pulse_us: pulse.jittered_time_us,
            arrival_us: msg.arrival_true_time_us,
        });
    }
    Ok(SimClock {
        sync_state: Some(SyncState {
            utc_second: pulse.utc_second,
            local_edge_us: clock.local_now(pulse.jittered_time_us),
        }),
        ..*clock
    })
}

/// True instant at which the synchronized clock believes UTC second
/// `utc_start_second` begins.
pub fn schedule_start(clock: &SimClock, utc_start_second: i64) -> Result<f64, ClockError> {
    let sync = clock.sync_state.ok_or(ClockError::Unsynchronized)?;
    if utc_start_second <= sync.utc_second {
        return Err(ClockError::StartNotInFuture {
            synced: sync.utc_second,
            start: utc_start_second,
        });
    }
    let seconds_ahead = (utc_start_second - sync.utc_second) as f64;
    let target_local = sync.local_edge_us + seconds_ahead * MICROS_PER_SECOND as f64;
    Ok(clock.true_time_at_local(target_local))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clock(drift: f64, offset: f64) -> SimClock {
        SimClock::new(drift, offset, 0).unwrap()
    }

    #[test]
    fn local_now_examples() {
        assert_eq!(clock(0.0, 0.0).local_now(5_000_000.0), 5_000_000.0);
        assert!((clock(100.0, 0.0).local_now(5_000_000.0) - 5_000_500.0).abs() < 1e-6);
        assert!((clock(-100.0, 0.0).local_now(5_000_000.0) - 4_999_500.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_monotonic_drift() {
        assert!(SimClock::new(-1e6, 0.0, 0).is_err());
        assert!(SimClock::new(f64::NAN, 0.0, 0).is_err());
    }

    #[test]
    fn zero_jitter_pulses_sit_on_full_seconds() {
        let pulses = generate_timepulses(7, 100, 5, 0.0);
        for (i, p) in pulses.iter().enumerate() {
            assert_eq!(p.true_time_us, i as i64 * 1_000_000);
            assert_eq!(p.jittered_time_us, p.true_time_us as f64);
            assert_eq!(p.utc_second, 100 + i as i64);
        }
        assert!(pulses.windows(2).all(|w| w[1].utc_second - w[0].utc_second == 1));
    }

    #[test]
    fn pulse_jitter_has_configured_sigma() {
        let pulses = generate_timepulses(42, 0, 10_000, 30.0);
        let n = pulses.len() as f64;
        let mean = pulses.iter().map(TimepulseEvent::jitter_us).sum::<f64>() / n;
        let var = pulses
            .iter()
            .map(|p| (p.jitter_us() - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        let sd = var.sqrt();
        assert!((sd - 30.0).abs() < 3.0, "sd = {sd}");
    }

    #[test]
    fn pulses_are_seed_deterministic() {
        assert_eq!(
            generate_timepulses(3, 0, 20, 30.0),
            generate_timepulses(3, 0, 20, 30.0)
        );
        assert_ne!(
            generate_timepulses(3, 0, 20, 30.0),
            generate_timepulses(4, 0, 20, 30.0)
        );
    }

    #[test]
    fn sync_rejects_mismatched_message() {
        let pulse = generate_timepulses(1, 50, 1, 0.0)[0];
        let msg = UtcMessage {
            utc_second: 51,
            arrival_true_time_us: 100_000,
        };
        assert_eq!(
            sync_to_gps(&SimClock::ideal(), &pulse, &msg),
            Err(ClockError::SecondMismatch { pulse: 50, message: 51 })
        );
        let late = UtcMessage {
            utc_second: 50,
            arrival_true_time_us: 1_200_000,
        };
        assert!(matches!(
            sync_to_gps(&SimClock::ideal(), &pulse, &late),
            Err(ClockError::MessageTiming { .. })
        ));
    }

    #[test]
    fn sync_is_idempotent() {
        let c = clock(37.0, 12_345.0);
        let pulse = generate_timepulses(9, 10, 1, 30.0)[0];
        let msg = UtcMessage::following(&pulse, DEFAULT_MESSAGE_DELAY_US);
        let once = sync_to_gps(&c, &pulse, &msg).unwrap();
        let twice = sync_to_gps(&once, &pulse, &msg).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn schedule_requires_sync_and_future_second() {
        assert_eq!(
            schedule_start(&SimClock::ideal(), 5),
            Err(ClockError::Unsynchronized)
        );
        let pulse = generate_timepulses(1, 10, 1, 0.0)[0];
        let c = sync_to_gps(
            &SimClock::ideal(),
            &pulse,
            &UtcMessage::following(&pulse, DEFAULT_MESSAGE_DELAY_US),
        )
        .unwrap();
        assert!(matches!(
            schedule_start(&c, 10),
            Err(ClockError::StartNotInFuture { .. })
        ));
    }

    #[test]
    fn perfect_clock_starts_on_the_second() {
        let pulse = generate_timepulses(1, 10, 1, 0.0)[0];
        let c = sync_to_gps(
            &SimClock::ideal(),
            &pulse,
            &UtcMessage::following(&pulse, DEFAULT_MESSAGE_DELAY_US),
        )
        .unwrap();
        assert_eq!(schedule_start(&c, 13).unwrap(), 3_000_000.0);
    }

    #[test]
    fn late_edge_delays_start_by_the_same_amount() {
        // A pulse rising j µs late makes the clock believe the second began
        // j µs late, so it waits j µs longer.
        let j = 23.5;
        let pulse = TimepulseEvent {
            true_time_us: 0,
            jittered_time_us: j,
            utc_second: 10,
        };
        let c = sync_to_gps(
            &clock(0.0, 777.0),
            &pulse,
            &UtcMessage::following(&pulse, DEFAULT_MESSAGE_DELAY_US),
        )
        .unwrap();
        let start = schedule_start(&c, 12).unwrap();
        assert!((start - (2_000_000.0 + j)).abs() < 1e-6);
    }

    #[test]
    fn drift_error_at_start_is_rate_times_wait() {
        let pulse = generate_timepulses(1, 0, 1, 0.0)[0];
        let msg = UtcMessage::following(&pulse, DEFAULT_MESSAGE_DELAY_US);
        let fast = sync_to_gps(&clock(100.0, 5.0), &pulse, &msg).unwrap();
        let start = schedule_start(&fast, 5).unwrap();
        // 5 s of local time at +100 ppm elapse in 5e6/(1+1e-4) true µs.
        assert!((start - 5e6 / 1.0001).abs() < 1e-6);
        assert!((5e6 - start - 499.95).abs() < 0.01);
    }

    #[test]
    fn clocks_disagree_at_sync_by_their_pulse_jitter() {
        let pa = TimepulseEvent { true_time_us: 0, jittered_time_us: 12.0, utc_second: 1 };
        let pb = TimepulseEvent { true_time_us: 0, jittered_time_us: -31.0, utc_second: 1 };
        let a = sync_to_gps(&clock(80.0, 1e5), &pa, &UtcMessage::following(&pa, 100_000)).unwrap();
        let b = sync_to_gps(&clock(-60.0, -3e4), &pb, &UtcMessage::following(&pb, 100_000)).unwrap();
        // Evaluate each estimate at that station's own sync instant.
        let ea = a.utc_estimate_us(pa.jittered_time_us).unwrap();
        let eb = b.utc_estimate_us(pb.jittered_time_us).unwrap();
        assert_eq!(ea, eb);
        // At a common true instant the disagreement is the jitter difference
        // scaled by each clock's rate.
        let t = 0.0;
        let da = a.utc_estimate_us(t).unwrap();
        let db = b.utc_estimate_us(t).unwrap();
        let expected = -(12.0 * (1.0 + 80e-6)) + (-31.0) * (1.0 - 60e-6);
        assert!((da - db - expected).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn local_now_strictly_increasing(drift in -1e5f64..1e5, t in 0.0f64..1e9, dt in 1e-3f64..1e6) {
                let c = clock(drift, 0.0);
                prop_assert!(c.local_now(t + dt) > c.local_now(t));
            }

            #[test]
            fn deviation_is_rate_times_elapsed(drift in -100.0f64..100.0, t in 0i64..600_000_000) {
                let c = clock(drift, 0.0);
                let deviation = c.local_now(t as f64) - t as f64;
                let expected = drift * t as f64 / 1e6;
                prop_assert!((deviation - expected).abs() <= 1e-6 * (1.0 + expected.abs()));
            }
        }
    }
}
