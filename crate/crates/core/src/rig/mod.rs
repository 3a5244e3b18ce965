//! One measurement station: rotation platform, potentiometer, VR pipeline,
//! strobed display, photosensors and the 1 kHz capture loop.
//!
//! The capture loop runs on the station's own crystal: sample `i` is taken
//! when the local clock reads `start + i·interval`, so a drifting crystal
//! stretches or compresses the sampling grid against true time. The display
//! and tracking system run on the VR PC, which is treated as an ideal clock.

pub mod motion;
pub mod pipeline;
pub mod sensor;

use rand::Rng;
use thiserror::Error;

use crate::clock::{
    generate_timepulses, schedule_start, sync_to_gps, ClockError, GpsConfig, SimClock, UtcMessage,
    MICROS_PER_SECOND,
};
use crate::codec::{CodecError, DIGIT_COUNT};
use crate::seeding::{self, streams};

pub use motion::{platform_angle, MotionKind, MotionProfile};
pub use pipeline::{display_emission, pipeline_step, AngleSource, DisplayTimeline, PipelineConfig, TrackedAngle};
pub use sensor::{photosensor_respond, potentiometer_read, FirstOrderLowPass, SensorConfig};

/// Frames rendered before the first sample so the sensor filter has settled.
const WARMUP_FRAMES: i64 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RigError {
    #[error("tracking history does not reach back to {t_ms:.3} ms")]
    InsufficientHistory { t_ms: f64 },
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("capture must contain at least one sample")]
    EmptyCapture,
}

/// Raw 1 kHz record of one station.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCapture {
    pub station_id: String,
    /// Scheduled UTC start of the capture.
    pub start_utc_us: i64,
    pub interval_ms: f64,
    /// Full-scale angle of the potentiometer and of the brightness code.
    pub angle_range_deg: f64,
    /// Normalized potentiometer readings.
    pub pot: Vec<f64>,
    /// Photosensor readings, one per code area.
    pub photo: Vec<[f64; DIGIT_COUNT]>,
}

impl RawCapture {
    pub fn len(&self) -> usize {
        self.pot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pot.is_empty()
    }
}

/// Everything that distinguishes one station from another.
#[derive(Debug, Clone)]
pub struct Station {
    pub id: String,
    /// Index used to select PRNG streams.
    pub index: u64,
    pub clock: SimClock,
    pub motion: MotionProfile<f64>,
    pub pipeline: PipelineConfig,
    pub sensors: SensorConfig,
    pub angle_range_deg: f64,
}

impl Station {
    fn rng(&self, seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
        seeding::stream(seed, seeding::station_base(self.index) + stream)
    }

    /// The station's own tracking system, with a seeded sampling phase.
    pub fn tracked(&self, seed: u64) -> TrackedAngle {
        let interval_us = 1e6 / self.pipeline.tracking_rate_hz;
        let phase = self.rng(seed, streams::TRACKING_PHASE).random::<f64>() * interval_us;
        TrackedAngle::new(self.motion, &self.pipeline, phase)
    }
}

/// Where a station's capture sits on the true-time axis.
#[derive(Debug, Clone)]
pub struct StationTiming {
    pub clock: SimClock,
    pub true_start_us: f64,
    pub start_utc_us: i64,
    pub sample_times_us: Vec<f64>,
}

/// Synchronizes the station clock to the first timepulse, schedules the
/// agreed UTC start and lays out the local-clock sampling grid.
pub fn station_timing(
    station: &Station,
    gps: &GpsConfig,
    seed: u64,
    duration_ms: f64,
) -> Result<StationTiming, RigError> {
    let pulse_seed = seeding::derive(seed, seeding::station_base(station.index) + streams::GPS_JITTER);
    let pulses = generate_timepulses(
        pulse_seed ^ station.clock.seed,
        gps.utc_origin_s,
        1,
        gps.jitter_sigma_us,
    );
    let pulse = pulses[0];
    let msg = UtcMessage::following(&pulse, gps.message_delay_us());
    let clock = sync_to_gps(&station.clock, &pulse, &msg)?;
    let start_second = gps.utc_origin_s + gps.start_delay_s;
    let true_start_us = schedule_start(&clock, start_second)?;

    let interval_us = station.sensors.interval_us();
    let count = (duration_ms * 1000.0 / interval_us).round() as usize;
    if count == 0 {
        return Err(RigError::EmptyCapture);
    }
    let local_start = clock.local_now(true_start_us);
    let sample_times_us = (0..count)
        .map(|i| clock.true_time_at_local(local_start + i as f64 * interval_us))
        .collect();
    Ok(StationTiming {
        clock,
        true_start_us,
        start_utc_us: start_second * MICROS_PER_SECOND,
        sample_times_us,
    })
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Runs the capture loop of `station`. Its display shows whatever `source`
/// delivers to the renderer, which is the station's own tracking system for
/// a local measurement or the network feed of a remote one.
pub fn capture_station(
    station: &Station,
    timing: &StationTiming,
    source: &dyn AngleSource,
    seed: u64,
) -> Result<RawCapture, RigError> {
    let times = &timing.sample_times_us;
    let (first_t, last_t) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(RigError::EmptyCapture),
    };
    let period_us = 1e6 / station.pipeline.refresh_hz;
    let vsync_phase = station.rng(seed, streams::VSYNC_PHASE).random::<f64>() * period_us;
    let frame_of = |t: f64| ((t - vsync_phase) / period_us).floor() as i64;
    let first_frame = frame_of(first_t) - WARMUP_FRAMES;
    let last_frame = frame_of(last_t) + 1;
    let timeline = pipeline_step(
        &station.pipeline,
        source,
        station.angle_range_deg,
        vsync_phase,
        first_frame,
        last_frame,
    )?;

    let start = timeline.frame_start_us(first_frame);
    let mut cursor = timeline.cursor(start);
    let mut photo_rng = station.rng(seed, streams::PHOTO_NOISE);
    let photo = photosensor_respond(
        &mut cursor,
        start,
        times,
        station.sensors.rise_time_us,
        station.sensors.photo_noise_sigma,
        &mut photo_rng,
    )
    .into_iter()
    .map(|l| l.0.map(round6))
    .collect();

    let mut pot_rng = station.rng(seed, streams::POT_NOISE);
    let pot = times
        .iter()
        .map(|&t| {
            let angle = station.motion.angle_at(t / 1000.0);
            round6(potentiometer_read(
                angle,
                station.angle_range_deg,
                station.sensors.pot_noise_sigma,
                &mut pot_rng,
            ))
        })
        .collect();

    Ok(RawCapture {
        station_id: station.id.clone(),
        start_utc_us: timing.start_utc_us,
        interval_ms: station.sensors.interval_us() / 1000.0,
        angle_range_deg: station.angle_range_deg,
        pot,
        photo,
    })
}

/// Local measurement: the station displays its own tracked angle.
pub fn capture_local(
    station: &Station,
    gps: &GpsConfig,
    seed: u64,
    duration_ms: f64,
) -> Result<RawCapture, RigError> {
    let timing = station_timing(station, gps, seed, duration_ms)?;
    let tracked = station.tracked(seed);
    capture_station(station, &timing, &tracked, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{classify_luminance, decode, quantize_angle, LuminanceVector};

    fn station(pipeline: PipelineConfig, sensors: SensorConfig) -> Station {
        Station {
            id: "A".into(),
            index: 0,
            clock: SimClock::new(40.0, 1234.5, 0).unwrap(),
            motion: MotionProfile::default(),
            pipeline,
            sensors,
            angle_range_deg: 360.0,
        }
    }

    fn quiet() -> SensorConfig {
        SensorConfig {
            pot_noise_sigma: 0.0,
            photo_noise_sigma: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn five_seconds_give_five_thousand_samples() {
        let st = station(PipelineConfig::default(), SensorConfig::default());
        let cap = capture_local(&st, &GpsConfig::default(), 1, 5000.0).unwrap();
        assert_eq!(cap.pot.len(), 5000);
        assert_eq!(cap.photo.len(), 5000);
        assert_eq!(cap.interval_ms, 1.0);
        assert_eq!(cap.start_utc_us, (GpsConfig::default().utc_origin_s + 1) * 1_000_000);
    }

    #[test]
    fn same_seed_same_capture() {
        let st = station(PipelineConfig::default(), SensorConfig::default());
        let gps = GpsConfig::default();
        let a = capture_local(&st, &gps, 9, 2000.0).unwrap();
        let b = capture_local(&st, &gps, 9, 2000.0).unwrap();
        let c = capture_local(&st, &gps, 10, 2000.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn drift_skews_sampling_grid() {
        let mut st = station(PipelineConfig::default(), quiet());
        st.clock = SimClock::new(100.0, 0.0, 0).unwrap();
        let gps = GpsConfig { jitter_sigma_us: 0.0, ..Default::default() };
        let t = station_timing(&st, &gps, 1, 5000.0).unwrap();
        let span = t.sample_times_us[4999] - t.sample_times_us[0];
        assert!((span - 4_999_000.0 / 1.0001).abs() < 1e-6);
    }

    #[test]
    fn lit_samples_decode_to_the_tracked_angle() {
        let st = station(PipelineConfig::default(), quiet());
        let gps = GpsConfig::default();
        let timing = station_timing(&st, &gps, 3, 1000.0).unwrap();
        let tracked = st.tracked(3);
        let cap = capture_station(&st, &timing, &tracked, 3).unwrap();
        let mut checked = 0;
        for (i, p) in cap.photo.iter().enumerate() {
            let lum = LuminanceVector(*p);
            // Fully settled samples only: every channel within 1 % of a level.
            if lum.peak() < 0.5 || p.iter().any(|&v| crate::codec::level_residual(v) > 0.01) {
                continue;
            }
            let code = decode(classify_luminance(&lum));
            let t = timing.sample_times_us[i];
            // The code on screen was read at the V-sync of the current frame
            // (no render time, no tracking delay), i.e. at most one frame plus
            // one tracking sample before the sample instant.
            let window: Vec<_> = (0..=100)
                .map(|k| {
                    let at = t - 12_200.0 * k as f64 / 100.0;
                    quantize_angle(st.motion.angle_at(at / 1000.0), 360.0).unwrap()
                })
                .collect();
            let lo = *window.iter().min().unwrap();
            let hi = *window.iter().max().unwrap();
            assert!(code >= lo && code <= hi, "sample {i}: {code:?} not in [{lo:?}, {hi:?}]");
            checked += 1;
        }
        assert!(checked > 60, "only {checked} settled samples");
    }

    #[test]
    fn displayed_code_never_comes_from_the_future() {
        let cfg = PipelineConfig {
            tracking_delay_ms: 2.0,
            render_compute_ms: 3.0,
            ..Default::default()
        };
        let st = station(cfg, quiet());
        let tracked = st.tracked(4);
        let tl = pipeline_step(&cfg, &tracked, 360.0, 250.0, 200, 300).unwrap();
        for frame in 200..=300 {
            let vsync = tl.frame_start_us(frame);
            let sampled = tracked.latest_sample_time(vsync - 3000.0).unwrap();
            assert!(sampled < vsync);
        }
    }
}
