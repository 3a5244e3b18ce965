//! Scenario configuration: parsing, validation, presets and station setup.
//!
//! Configs are TOML with flat dotted keys such as `pipeline.refresh_hz = 90`.
//! Every key is optional and unknown keys are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioPathConfig;
use crate::clock::{GpsConfig, SimClock};
use crate::netsim::{NetworkConfig, RemoteScenario};
use crate::rig::{capture_local, MotionKind, MotionProfile, PipelineConfig, RawCapture, RigError, SensorConfig, Station};

/// Station ids in the order of their PRNG stream index.
pub const STATION_IDS: [&str; 2] = ["A", "B"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Local,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionSection {
    pub amplitude_deg: f64,
    pub period_ms: f64,
    pub center_deg: f64,
    pub kind: MotionKind,
}

impl Default for MotionSection {
    fn default() -> Self {
        let m = MotionProfile::<f64>::default();
        MotionSection {
            amplitude_deg: m.amplitude_deg,
            period_ms: m.period_ms,
            center_deg: m.center_deg,
            kind: m.kind,
        }
    }
}

impl From<MotionSection> for MotionProfile<f64> {
    fn from(m: MotionSection) -> Self {
        MotionProfile {
            amplitude_deg: m.amplitude_deg,
            period_ms: m.period_ms,
            center_deg: m.center_deg,
            kind: m.kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClockSection {
    pub drift_ppm: f64,
    /// Local clock reading at true time zero.
    pub epoch_offset_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    pub duration_ms: f64,
    pub angle_range_deg: f64,
    pub max_lag_ms: usize,
    pub allow_negative_lag: bool,
    pub motion: MotionSection,
    /// Platform motion at station B; defaults to `motion`.
    pub motion_b: Option<MotionSection>,
    pub pipeline: PipelineConfig,
    /// Pipeline of station B in remote mode; defaults to `pipeline`.
    pub receiver_pipeline: Option<PipelineConfig>,
    pub sensors: SensorConfig,
    pub clock_a: ClockSection,
    pub clock_b: ClockSection,
    pub gps: GpsConfig,
    pub net: Option<NetworkConfig>,
    pub audio: Option<AudioPathConfig>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "custom".into(),
            mode: Mode::Local,
            seed: 1,
            duration_ms: 5000.0,
            angle_range_deg: 360.0,
            max_lag_ms: 500,
            allow_negative_lag: false,
            motion: MotionSection::default(),
            motion_b: None,
            pipeline: PipelineConfig::default(),
            receiver_pipeline: None,
            sensors: SensorConfig::default(),
            clock_a: ClockSection::default(),
            clock_b: ClockSection::default(),
            gps: GpsConfig::default(),
            net: None,
            audio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("unknown station `{0}`")]
    UnknownStation(String),
    #[error("{0} mode required")]
    WrongMode(&'static str),
}

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        /// Bundled scenarios as `(name, TOML source)`.
        pub const PRESETS: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../presets/", $name, ".toml")))),*
        ];
    };
}

presets!(
    "vive-baseline",
    "frame-delay-1",
    "frame-delay-5",
    "frame-delay-10",
    "remote-default",
    "remote-asymmetric",
    "audio-local",
    "audio-remote",
    "zero-delay",
    "extrapolation-overshoot",
);

impl Scenario {
    /// Parses and validates a config.
    pub fn from_toml(src: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(src).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn preset(name: &str) -> Result<Self, ScenarioError> {
        let (_, src) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ScenarioError::UnknownPreset(name.to_string()))?;
        Self::from_toml(src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks every field and reports all violations together.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut v = Violations::default();
        v.check(self.duration_ms.is_finite() && self.duration_ms > 0.0, "duration_ms must be positive");
        v.check(
            self.angle_range_deg.is_finite() && self.angle_range_deg > 0.0,
            "angle_range_deg must be positive",
        );
        v.check(self.max_lag_ms > 0, "max_lag_ms must be at least 1");
        v.check(
            self.duration_ms >= 10.0 * self.max_lag_ms as f64,
            format!(
                "duration_ms ({}) must be at least 10 x max_lag_ms ({})",
                self.duration_ms, self.max_lag_ms
            ),
        );
        self.check_motion(&mut v, "motion", &self.motion);
        if let Some(m) = &self.motion_b {
            self.check_motion(&mut v, "motion_b", m);
        }
        self.check_pipeline(&mut v, "pipeline", &self.pipeline);
        if let Some(p) = &self.receiver_pipeline {
            self.check_pipeline(&mut v, "receiver_pipeline", p);
        }

        let s = &self.sensors;
        v.check(s.rise_time_us >= 0.0, "sensors.rise_time_us must be non-negative");
        v.check(s.pot_noise_sigma >= 0.0, "sensors.pot_noise_sigma must be non-negative");
        v.check(s.photo_noise_sigma >= 0.0, "sensors.photo_noise_sigma must be non-negative");
        v.check(s.adc_sample_hz > 0.0, "sensors.adc_sample_hz must be positive");
        v.check(s.adc_conversion_us >= 0.0, "sensors.adc_conversion_us must be non-negative");
        v.check(
            s.adc_sample_hz * s.adc_conversion_us < 1e6,
            "sensors: conversions do not fit in one sample interval",
        );

        for (name, c) in [("clock_a", &self.clock_a), ("clock_b", &self.clock_b)] {
            v.check(
                c.drift_ppm.is_finite() && c.drift_ppm.abs() < 1e6,
                format!("{name}.drift_ppm must lie in (-1e6, 1e6)"),
            );
            v.check(c.epoch_offset_us.is_finite(), format!("{name}.epoch_offset_us must be finite"));
        }

        let g = &self.gps;
        v.check(g.jitter_sigma_us >= 0.0, "gps.jitter_sigma_us must be non-negative");
        v.check(
            g.message_delay_ms > 0.0 && g.message_delay_ms < 1000.0,
            "gps.message_delay_ms must lie in (0, 1000)",
        );
        v.check(
            (1..=60).contains(&g.start_delay_s),
            "gps.start_delay_s must lie in 1..=60",
        );

        match (&self.mode, &self.net) {
            (Mode::Remote, None) => v.push("remote mode requires a net section"),
            (_, Some(n)) => {
                v.check(n.send_rate_hz > 0.0, "net.send_rate_hz must be positive");
                v.check(
                    n.one_way_delay_ms >= 0.0 && n.one_way_delay_ms.is_finite(),
                    "net.one_way_delay_ms must be non-negative",
                );
                v.check(n.jitter_ms >= 0.0 && n.jitter_ms.is_finite(), "net.jitter_ms must be non-negative");
            }
            _ => {}
        }

        if let Some(a) = &self.audio {
            v.check(
                a.detector_threshold > 0.0 && a.detector_threshold < 1.0,
                "audio.detector_threshold must lie in (0, 1)",
            );
            v.check(a.tone_hz > 0.0, "audio.tone_hz must be positive");
            v.check(a.sample_hz > 0.0, "audio.sample_hz must be positive");
            v.check(a.path_delay_ms >= 0.0, "audio.path_delay_ms must be non-negative");
            v.check(a.attenuation >= 0.0, "audio.attenuation must be non-negative");
            v.check(a.noise_sigma >= 0.0, "audio.noise_sigma must be non-negative");
            v.check(a.horizon_ms > 0.0, "audio.horizon_ms must be positive");
        }
        v.finish()
    }

    fn check_motion(&self, v: &mut Violations, name: &str, m: &MotionSection) {
        v.check(m.amplitude_deg > 0.0, format!("{name}.amplitude_deg must be positive"));
        v.check(m.period_ms > 0.0, format!("{name}.period_ms must be positive"));
        v.check(
            m.center_deg - m.amplitude_deg >= 0.0 && m.center_deg + m.amplitude_deg < self.angle_range_deg,
            format!(
                "{name}: sweep {}..{} deg leaves the angle range 0..{}",
                m.center_deg - m.amplitude_deg,
                m.center_deg + m.amplitude_deg,
                self.angle_range_deg
            ),
        );
    }

    fn check_pipeline(&self, v: &mut Violations, name: &str, p: &PipelineConfig) {
        v.check(p.tracking_delay_ms >= 0.0, format!("{name}.tracking_delay_ms must be non-negative"));
        v.check(p.render_compute_ms >= 0.0, format!("{name}.render_compute_ms must be non-negative"));
        v.check(p.extrapolation_ms >= 0.0, format!("{name}.extrapolation_ms must be non-negative"));
        v.check(p.tracking_rate_hz > 0.0, format!("{name}.tracking_rate_hz must be positive"));
        v.check(p.refresh_hz > 0.0, format!("{name}.refresh_hz must be positive"));
        v.check(
            (1.0..=2.0).contains(&p.display_persistence_ms),
            format!("{name}.display_persistence_ms must lie in [1, 2]"),
        );
        v.check(
            p.display_persistence_ms <= p.frame_period_ms() + 1e-9,
            format!("{name}.display_persistence_ms exceeds the frame period"),
        );
        // The renderer must find tracking history after the sync second.
        let history_ms = p.queue_delay_ms()
            + 5.0 * p.frame_period_ms()
            + p.render_compute_ms
            + p.tracking_delay_ms
            + 2000.0 / p.tracking_rate_hz;
        v.check(
            history_ms < self.gps.start_delay_s as f64 * 1000.0 - 200.0,
            format!("{name}: pipeline reaches back {history_ms:.1} ms, beyond the start delay"),
        );
    }

    pub fn motion_profile(&self, station_index: usize) -> MotionProfile<f64> {
        match (station_index, self.motion_b) {
            (1, Some(m)) => m.into(),
            _ => self.motion.into(),
        }
    }

    /// Station `index` (0 = A, 1 = B) of this scenario.
    pub fn station(&self, index: usize) -> Result<Station, ScenarioError> {
        let id = *STATION_IDS
            .get(index)
            .ok_or_else(|| ScenarioError::UnknownStation(index.to_string()))?;
        let (clock, pipeline) = match index {
            0 => (self.clock_a, self.pipeline),
            _ => (self.clock_b, self.receiver_pipeline.unwrap_or(self.pipeline)),
        };
        let clock = SimClock::new(clock.drift_ppm, clock.epoch_offset_us, index as u64)
            .map_err(|e| ScenarioError::Invalid(vec![e.to_string()]))?;
        Ok(Station {
            id: id.to_string(),
            index: index as u64,
            clock,
            motion: self.motion_profile(index),
            pipeline,
            sensors: self.sensors,
            angle_range_deg: self.angle_range_deg,
        })
    }

    pub fn remote(&self) -> Result<RemoteScenario, ScenarioError> {
        if self.mode != Mode::Remote {
            return Err(ScenarioError::WrongMode("remote"));
        }
        Ok(RemoteScenario {
            sender: self.station(0)?,
            receiver: self.station(1)?,
            net: self.net.ok_or(ScenarioError::WrongMode("remote"))?,
            gps: self.gps,
        })
    }
}

#[derive(Default)]
struct Violations(Vec<String>);

impl Violations {
    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.0.push(msg.into());
        }
    }

    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn finish(self) -> Result<(), ScenarioError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(self.0))
        }
    }
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Rig(#[from] RigError),
}

/// Local capture of one station (`"A"` or `"B"`) with the scenario's seed.
pub fn run_capture(scenario: &Scenario, station_id: &str, duration_ms: f64) -> Result<RawCapture, CaptureError> {
    scenario.validate()?;
    let index = STATION_IDS
        .iter()
        .position(|s| *s == station_id)
        .ok_or_else(|| ScenarioError::UnknownStation(station_id.to_string()))?;
    let station = scenario.station(index)?;
    Ok(capture_local(&station, &scenario.gps, scenario.seed, duration_ms)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_validates() {
        for (name, _) in PRESETS {
            let s = Scenario::preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&s.name, name);
        }
    }

    #[test]
    fn dotted_keys_override_defaults() {
        let s = Scenario::from_toml("pipeline.refresh_hz = 120.0\nseed = 9\n").unwrap();
        assert_eq!(s.pipeline.refresh_hz, 120.0);
        assert_eq!(s.pipeline.display_persistence_ms, 1.5);
        assert_eq!(s.seed, 9);
        assert_eq!(s.duration_ms, 5000.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            Scenario::from_toml("pipeline.refresh_rate = 90.0"),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn all_violations_are_reported() {
        let src = "angle_range_deg = 100.0\nmode = \"remote\"\npipeline.display_persistence_ms = 3.0\n\
                   sensors.adc_conversion_us = 1500.0\naudio.detector_threshold = 1.0\n";
        let Err(ScenarioError::Invalid(msgs)) = Scenario::from_toml(src) else {
            panic!("expected validation failure");
        };
        // motion sweep, persistence, adc budget, missing net, audio threshold
        assert_eq!(msgs.len(), 5, "{msgs:#?}");
    }

    #[test]
    fn short_duration_for_lag_range_is_invalid() {
        assert!(Scenario::from_toml("duration_ms = 4000.0").is_err());
        assert!(Scenario::from_toml("duration_ms = 4000.0\nmax_lag_ms = 400").is_ok());
    }

    #[test]
    fn toml_round_trip() {
        let s = Scenario::preset("remote-default").unwrap();
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn stations_pick_their_sections() {
        let s = Scenario::preset("remote-default").unwrap();
        let a = s.station(0).unwrap();
        let b = s.station(1).unwrap();
        assert_eq!(a.pipeline.render_compute_ms, 2.0);
        assert_eq!(b.pipeline.render_compute_ms, 4.0);
        assert_eq!(b.clock.drift_ppm, -9.0);
        assert!(s.station(2).is_err());
        assert!(Scenario::preset("vive-baseline").unwrap().remote().is_err());
    }

    #[test]
    fn run_capture_has_requested_length() {
        let s = Scenario::preset("vive-baseline").unwrap();
        let c = run_capture(&s, "A", 1500.0).unwrap();
        assert_eq!(c.len(), 1500);
        assert!(run_capture(&s, "C", 1500.0).is_err());
    }
}
